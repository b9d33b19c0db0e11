//! Hessian-vector products.
//!
//! `Hv` is formed by central differences of the exact gradient:
//!
//! ```text
//! Hv ~= (grad(theta + h v) - grad(theta - h v)) / (2 h)
//! h   = sqrt(eps_machine) * (1 + |theta|) / |v|
//! ```
//!
//! The step scales with the parameter norm so the relative perturbation
//! stays near the square root of machine precision, which balances
//! truncation against cancellation. Because the gradient itself is exact,
//! the product is exact (up to rounding) whenever the loss is quadratic.

use super::{loss_grad, Batch, LossSpec, NetworkSpec, ParamVector};
use crate::error::Result;

/// Hessian-vector product of the loss at `params` with direction `v`.
pub fn hvp(
    spec: &NetworkSpec,
    loss: LossSpec,
    params: &ParamVector,
    batch: &Batch,
    v: &ParamVector,
) -> Result<ParamVector> {
    let d = params.len();
    assert_eq!(v.len(), d, "direction length mismatch");
    let v_norm = v.l2_norm();
    if v_norm == 0.0 {
        return Ok(ParamVector::zeros(d));
    }
    let h = f64::EPSILON.sqrt() * (1.0 + params.l2_norm()) / v_norm;

    let mut up = params.clone();
    let mut dn = params.clone();
    for i in 0..d {
        up[i] += h * v[i];
        dn[i] -= h * v[i];
    }
    let (_, gu) = loss_grad(spec, loss, &up, batch)?;
    let (_, gd) = loss_grad(spec, loss, &dn, batch)?;

    let mut out = ParamVector::zeros(d);
    let inv = 1.0 / (2.0 * h);
    for i in 0..d {
        out[i] = (gu[i] - gd[i]) * inv;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::build_network;
    use rand::Rng;

    fn rand_vec(d: usize, seed: u64) -> ParamVector {
        let mut rng = crate::rng::rng_from(seed);
        let mut v = ParamVector::zeros(d);
        for i in 0..d {
            v[i] = rng.gen_range(-1.0..1.0);
        }
        v
    }

    #[test]
    fn exact_on_quadratic_loss() {
        // A linear map under squared error has a constant Hessian, which for
        // f(x) = w x + b on one output is [[2E[x^2], 2E[x]], [2E[x], 2]].
        let spec = NetworkSpec::mlp(1, &[], 1);
        let xs = [0.5, -1.2, 2.0, 0.3];
        let ys = [1.0, 0.0, -0.5, 2.0];
        let mut batch = Batch::from_inputs(xs.to_vec(), 4);
        batch.targets = Some(ys.to_vec());
        let params = rand_vec(2, 3);

        let ex2 = xs.iter().map(|x| x * x).sum::<f64>() / 4.0;
        let ex = xs.iter().sum::<f64>() / 4.0;
        let h = [[2.0 * ex2, 2.0 * ex], [2.0 * ex, 2.0]];

        for seed in 0..5 {
            let v = rand_vec(2, 100 + seed);
            let hv = hvp(&spec, LossSpec::Regression, &params, &batch, &v).unwrap();
            for i in 0..2 {
                let want = h[i][0] * v[0] + h[i][1] * v[1];
                assert!(
                    (hv[i] - want).abs() <= 1e-8 * (1.0 + want.abs()),
                    "row {i}: {} vs {want}",
                    hv[i]
                );
            }
        }
    }

    #[test]
    fn symmetric_bilinear_form() {
        let spec = NetworkSpec::mlp(3, &[4], 2);
        let params = build_network(&spec, 17).unwrap();
        let d = params.len();
        let mut rng = crate::rng::rng_from(18);
        let mut batch = Batch::from_inputs((0..9).map(|_| rng.gen_range(-1.0..1.0)).collect(), 3);
        batch.targets = Some((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect());

        let v = rand_vec(d, 19);
        let w = rand_vec(d, 20);
        let hv = hvp(&spec, LossSpec::Regression, &params, &batch, &v).unwrap();
        let hw = hvp(&spec, LossSpec::Regression, &params, &batch, &w).unwrap();
        let vhw: f64 = (0..d).map(|i| v[i] * hw[i]).sum();
        let whv: f64 = (0..d).map(|i| w[i] * hv[i]).sum();
        let scale = vhw.abs().max(whv.abs()).max(1e-12);
        assert!(
            (vhw - whv).abs() / scale < 1e-6,
            "asymmetry {} vs {}",
            vhw,
            whv
        );
    }

    #[test]
    fn odd_in_direction_sign() {
        let spec = NetworkSpec::mlp(2, &[3], 1);
        let params = build_network(&spec, 21).unwrap();
        let mut batch = Batch::from_inputs(vec![0.4, -0.7, 0.1, 0.9], 2);
        batch.targets = Some(vec![0.5, -0.5]);
        let v = rand_vec(params.len(), 22);
        let mut neg = v.clone();
        for i in 0..neg.len() {
            neg[i] = -neg[i];
        }
        let hv = hvp(&spec, LossSpec::Regression, &params, &batch, &v).unwrap();
        let hneg = hvp(&spec, LossSpec::Regression, &params, &batch, &neg).unwrap();
        for i in 0..hv.len() {
            // same step size, mirrored evaluations: exact sign flip
            assert_eq!(hv[i], -hneg[i]);
        }
    }

    #[test]
    fn zero_direction_is_zero() {
        let spec = NetworkSpec::mlp(2, &[3], 1);
        let params = build_network(&spec, 23).unwrap();
        let mut batch = Batch::from_inputs(vec![0.4, -0.7], 1);
        batch.targets = Some(vec![0.5]);
        let hv = hvp(
            &spec,
            LossSpec::Regression,
            &params,
            &batch,
            &ParamVector::zeros(params.len()),
        )
        .unwrap();
        assert!(hv.as_slice().iter().all(|&x| x == 0.0));
    }
}
