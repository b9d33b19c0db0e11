//! Loss heads and the reverse pass.
//!
//! Every training objective in the crate reduces to one of four heads on
//! top of the shared network forward pass. Temporal-difference targets are
//! precomputed constants by the time they reach `SquaredTd`, so the
//! stop-gradient in the bootstrapped objective is structural: the gradient
//! never flows into the target-producing parameters.

use serde::{Deserialize, Serialize};

use super::forward::{axpy, forward_tape, Tape};
use super::{Batch, LayerKind, Layout, NetworkSpec, ParamVector};
use crate::error::{PlabError, Result};

/// Which objective sits on top of the network outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossSpec {
    /// Mean squared error over every output entry; targets are `n x out`.
    Regression,
    /// Squared TD error on the selected action's output; targets are the
    /// already-bootstrapped scalars, one per sample.
    SquaredTd,
    /// Softmax cross-entropy over groups of `n_bins` logits. With actions,
    /// only the selected group is scored against an `n x n_bins` target
    /// distribution; without, every group is scored against `n x out`.
    CategoricalCrossEntropy { n_bins: usize },
    /// Squared error against frozen targets; numerically identical to
    /// `Regression` but kept distinct because the targets encode an offset
    /// from the network's own initial outputs.
    ProbeHessian,
}

fn require_targets<'a>(batch: &'a Batch, want: usize, what: &str) -> Result<&'a [f64]> {
    let t = batch
        .targets
        .as_deref()
        .ok_or_else(|| PlabError::Input(format!("{what} loss needs targets")))?;
    if t.len() != want {
        return Err(PlabError::Input(format!(
            "{what} loss expected {want} target entries, got {}",
            t.len()
        )));
    }
    Ok(t)
}

fn require_actions<'a>(batch: &'a Batch, limit: usize, what: &str) -> Result<&'a [usize]> {
    let a = batch
        .actions
        .as_deref()
        .ok_or_else(|| PlabError::Input(format!("{what} loss needs actions")))?;
    if a.len() != batch.n {
        return Err(PlabError::Input(format!(
            "{what} loss expected {} actions, got {}",
            batch.n,
            a.len()
        )));
    }
    if let Some(bad) = a.iter().find(|&&ai| ai >= limit) {
        return Err(PlabError::Input(format!(
            "{what} loss action {bad} out of range (limit {limit})"
        )));
    }
    Ok(a)
}

/// Stable softmax of one logit group, written into `p`; returns logsumexp.
fn softmax_into(logits: &[f64], p: &mut [f64]) -> f64 {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (pi, &l) in p.iter_mut().zip(logits) {
        let e = (l - mx).exp();
        *pi = e;
        z += e;
    }
    let lse = mx + z.ln();
    for pi in p.iter_mut() {
        *pi /= z;
    }
    lse
}

/// Cross-entropy of one group; accumulates the logit gradient scaled by
/// `scale` into `df`. Handles unnormalized targets exactly.
fn ce_group(logits: &[f64], target: &[f64], scale: f64, df: &mut [f64]) -> f64 {
    let k = logits.len();
    let mut p = vec![0.0; k];
    let lse = softmax_into(logits, &mut p);
    let mass: f64 = target.iter().sum();
    let mut loss = 0.0;
    for b in 0..k {
        loss -= target[b] * (logits[b] - lse);
        df[b] += scale * (mass * p[b] - target[b]);
    }
    loss
}

/// Loss and output-gradient for a batch of network outputs `f` (`n x out`).
fn head(loss: LossSpec, f: &[f64], batch: &Batch, out_dim: usize) -> Result<(f64, Vec<f64>)> {
    let n = batch.n;
    let mut df = vec![0.0; f.len()];
    let value = match loss {
        LossSpec::Regression | LossSpec::ProbeHessian => {
            let t = require_targets(batch, n * out_dim, "regression")?;
            let m = (n * out_dim) as f64;
            let mut acc = 0.0;
            for i in 0..f.len() {
                let r = f[i] - t[i];
                acc += r * r;
                df[i] = 2.0 * r / m;
            }
            acc / m
        }
        LossSpec::SquaredTd => {
            let t = require_targets(batch, n, "td")?;
            let a = require_actions(batch, out_dim, "td")?;
            let m = n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let r = f[i * out_dim + a[i]] - t[i];
                acc += r * r;
                df[i * out_dim + a[i]] = 2.0 * r / m;
            }
            acc / m
        }
        LossSpec::CategoricalCrossEntropy { n_bins } => {
            if n_bins == 0 || out_dim % n_bins != 0 {
                return Err(PlabError::Config(format!(
                    "output dim {out_dim} is not a multiple of {n_bins} bins"
                )));
            }
            let groups = out_dim / n_bins;
            if batch.actions.is_some() {
                let a = require_actions(batch, groups, "cross-entropy")?;
                let t = require_targets(batch, n * n_bins, "cross-entropy")?;
                let m = n as f64;
                let mut acc = 0.0;
                for i in 0..n {
                    let off = i * out_dim + a[i] * n_bins;
                    acc += ce_group(
                        &f[off..off + n_bins],
                        &t[i * n_bins..(i + 1) * n_bins],
                        1.0 / m,
                        &mut df[off..off + n_bins],
                    );
                }
                acc / m
            } else {
                let t = require_targets(batch, n * out_dim, "cross-entropy")?;
                let m = (n * groups) as f64;
                let mut acc = 0.0;
                for i in 0..n {
                    for g in 0..groups {
                        let off = i * out_dim + g * n_bins;
                        acc += ce_group(
                            &f[off..off + n_bins],
                            &t[off..off + n_bins],
                            1.0 / m,
                            &mut df[off..off + n_bins],
                        );
                    }
                }
                acc / m
            }
        }
    };
    Ok((value, df))
}

/// Reverse pass: propagate `dy` (gradient w.r.t. final outputs) down the
/// tape, accumulating parameter gradients.
pub(crate) fn backward(
    layout: &Layout,
    params: &ParamVector,
    tape: &Tape,
    mut dy: Vec<f64>,
) -> ParamVector {
    let n = tape.n;
    let p = params.as_slice();
    let mut grad = ParamVector::zeros(layout.total);
    let g = grad.as_mut_slice();

    for (l, layer) in layout.layers.iter().enumerate().rev() {
        let x = &tape.activations[l];
        let out = &tape.activations[l + 1];

        // ReLU: the stored activation is the post-ReLU value, so the mask is
        // just positivity of the output.
        if layer.relu {
            for (d, &o) in dy.iter_mut().zip(out.iter()) {
                if o <= 0.0 {
                    *d = 0.0;
                }
            }
        }

        // Layer norm: y = g*nh + s per channel, nh the per-sample normalized
        // pre-activation. dz = inv * (dnh - mean(dnh) - nh * mean(dnh * nh)).
        if layer.layer_norm {
            let nh = tape.normed[l].as_deref().expect("norm tape");
            let inv = tape.inv_std[l].as_deref().expect("norm tape");
            let gp = &p[layer.g_off..layer.g_off + layer.ln_len];
            let m = layer.out_len as f64;
            for i in 0..n {
                let row = i * layer.out_len..(i + 1) * layer.out_len;
                let dyi = &mut dy[row.clone()];
                let nhi = &nh[row];
                let mut mean_dnh = 0.0;
                let mut mean_dnh_nh = 0.0;
                for j in 0..layer.out_len {
                    let c = j % layer.ln_len;
                    g[layer.g_off + c] += dyi[j] * nhi[j];
                    g[layer.s_off + c] += dyi[j];
                    let dnh = dyi[j] * gp[c];
                    dyi[j] = dnh;
                    mean_dnh += dnh;
                    mean_dnh_nh += dnh * nhi[j];
                }
                mean_dnh /= m;
                mean_dnh_nh /= m;
                for j in 0..layer.out_len {
                    dyi[j] = inv[i] * (dyi[j] - mean_dnh - nhi[j] * mean_dnh_nh);
                }
            }
        }

        // Linear part: accumulate dW, db and push dx to the layer below.
        let need_dx = l > 0;
        let mut dx = if need_dx { vec![0.0; n * layer.in_len] } else { Vec::new() };
        match layer.kind {
            LayerKind::Dense { in_dim, out_dim } => {
                let w = &p[layer.w_off..layer.w_off + layer.w_len];
                for i in 0..n {
                    let xi = &x[i * in_dim..(i + 1) * in_dim];
                    let dzi = &dy[i * out_dim..(i + 1) * out_dim];
                    for j in 0..out_dim {
                        let d = dzi[j];
                        if d == 0.0 {
                            continue;
                        }
                        axpy(d, xi, &mut g[layer.w_off + j * in_dim..layer.w_off + (j + 1) * in_dim]);
                        g[layer.b_off + j] += d;
                        if need_dx {
                            axpy(d, &w[j * in_dim..(j + 1) * in_dim], &mut dx[i * in_dim..(i + 1) * in_dim]);
                        }
                    }
                }
            }
            LayerKind::Conv {
                in_w,
                in_c,
                kernel,
                out_c,
                stride,
                out_h,
                out_w,
                ..
            } => {
                let w = &p[layer.w_off..layer.w_off + layer.w_len];
                let row = in_w * in_c;
                let krow = kernel * in_c;
                for i in 0..n {
                    let xi = &x[i * layer.in_len..(i + 1) * layer.in_len];
                    let dzi = &dy[i * layer.out_len..(i + 1) * layer.out_len];
                    for oh in 0..out_h {
                        for ow in 0..out_w {
                            let base = (oh * stride) * row + (ow * stride) * in_c;
                            let out_base = (oh * out_w + ow) * out_c;
                            for oc in 0..out_c {
                                let d = dzi[out_base + oc];
                                if d == 0.0 {
                                    continue;
                                }
                                g[layer.b_off + oc] += d;
                                let wk_off = layer.w_off + oc * layer.fan_in;
                                for dh in 0..kernel {
                                    let xs = base + dh * row;
                                    axpy(d, &xi[xs..xs + krow], &mut g[wk_off + dh * krow..wk_off + (dh + 1) * krow]);
                                    if need_dx {
                                        let wo = oc * layer.fan_in + dh * krow;
                                        axpy(
                                            d,
                                            &w[wo..wo + krow],
                                            &mut dx[i * layer.in_len + xs..i * layer.in_len + xs + krow],
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if need_dx {
            dy = dx;
        }
    }
    grad
}

/// Loss value only.
pub fn loss_value(
    spec: &NetworkSpec,
    loss: LossSpec,
    params: &ParamVector,
    batch: &Batch,
) -> Result<f64> {
    let tape = forward_tape(spec, params, batch)?;
    let (value, _) = head(loss, tape.outputs(), batch, spec.output_dim)?;
    Ok(value)
}

/// Loss value and full parameter gradient.
pub fn loss_grad(
    spec: &NetworkSpec,
    loss: LossSpec,
    params: &ParamVector,
    batch: &Batch,
) -> Result<(f64, ParamVector)> {
    let layout = spec.layout()?;
    let tape = forward_tape(spec, params, batch)?;
    let (value, df) = head(loss, tape.outputs(), batch, spec.output_dim)?;
    let grad = backward(&layout, params, &tape, df);
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_network, ConvSpec, InputShape, NetworkKind, NetworkSpec};
    use rand::Rng;

    #[test]
    fn single_linear_unit_example() {
        // f(x) = w*x + b with w=1, b=0, x=2, target 0:
        // loss = (2-0)^2 = 4, dL/dw = 2*2*2 = 8, dL/db = 4.
        let spec = NetworkSpec::mlp(1, &[], 1);
        let mut params = ParamVector::zeros(spec.param_count());
        params[0] = 1.0;
        let mut batch = Batch::from_inputs(vec![2.0], 1);
        batch.targets = Some(vec![0.0]);
        let (value, grad) = loss_grad(&spec, LossSpec::Regression, &params, &batch).unwrap();
        assert_eq!(value, 4.0);
        assert_eq!(grad[0], 8.0);
        assert_eq!(grad[1], 4.0);
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_bins() {
        let spec = NetworkSpec::mlp(3, &[], 10);
        let params = ParamVector::zeros(spec.param_count());
        let mut batch = Batch::from_inputs(vec![0.5, 0.1, 0.9], 1);
        batch.actions = Some(vec![0]);
        let mut t = vec![0.0; 10];
        t[4] = 1.0;
        batch.targets = Some(t);
        let v = loss_value(&spec, LossSpec::CategoricalCrossEntropy { n_bins: 10 }, &params, &batch)
            .unwrap();
        assert!((v - (10.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn td_grad_touches_only_selected_action_column() {
        let spec = NetworkSpec::mlp(2, &[], 3);
        let params = build_network(&spec, 5).unwrap();
        let mut batch = Batch::from_inputs(vec![0.2, 0.8], 1);
        batch.actions = Some(vec![1]);
        batch.targets = Some(vec![0.3]);
        let (_, grad) = loss_grad(&spec, LossSpec::SquaredTd, &params, &batch).unwrap();
        // weight rows for outputs 0 and 2 must be untouched
        for k in 0..2 {
            assert_eq!(grad[k], 0.0, "row 0");
            assert_eq!(grad[4 + k], 0.0, "row 2");
        }
        assert_eq!(grad[6], 0.0); // bias 0
        assert_eq!(grad[8], 0.0); // bias 2
        assert!(grad[2] != 0.0 || grad[3] != 0.0, "selected row must move");
    }

    /// Central-difference gradient check on a small network.
    fn fd_check(spec: &NetworkSpec, loss: LossSpec, batch: &Batch, seed: u64) {
        assert!(spec.param_count() <= 100, "keep FD affordable");
        let params = build_network(spec, seed).unwrap();
        let (_, grad) = loss_grad(spec, loss, &params, batch).unwrap();
        let mut fd = vec![0.0; params.len()];
        for i in 0..params.len() {
            let h = 1e-6 * (1.0 + params[i].abs());
            let mut up = params.clone();
            up[i] += h;
            let mut dn = params.clone();
            dn[i] -= h;
            let lu = loss_value(spec, loss, &up, batch).unwrap();
            let ld = loss_value(spec, loss, &dn, batch).unwrap();
            fd[i] = (lu - ld) / (2.0 * h);
        }
        let num: f64 = grad
            .as_slice()
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        assert!(num / den < 1e-4, "rel err {} for {:?}", num / den, loss);
    }

    fn small_batch(rng: &mut impl Rng, n: usize, in_dim: usize) -> Batch {
        let inputs = (0..n * in_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Batch::from_inputs(inputs, n)
    }

    #[test]
    fn gradients_match_finite_differences_mlp() {
        let mut rng = crate::rng::rng_from(42);
        let spec = NetworkSpec::mlp(3, &[5], 2); // 3*5+5 + 5*2+2 = 32 params
        let mut b = small_batch(&mut rng, 4, 3);
        b.targets = Some((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        fd_check(&spec, LossSpec::Regression, &b, 7);
        fd_check(&spec, LossSpec::ProbeHessian, &b, 8);

        let mut b = small_batch(&mut rng, 4, 3);
        b.actions = Some(vec![0, 1, 1, 0]);
        b.targets = Some((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
        fd_check(&spec, LossSpec::SquaredTd, &b, 9);
    }

    #[test]
    fn gradients_match_finite_differences_layer_norm() {
        let mut rng = crate::rng::rng_from(43);
        let mut spec = NetworkSpec::mlp(3, &[5], 2);
        spec.layer_norm = true;
        let mut b = small_batch(&mut rng, 4, 3);
        b.targets = Some((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        fd_check(&spec, LossSpec::Regression, &b, 10);
    }

    #[test]
    fn gradients_match_finite_differences_cross_entropy() {
        let mut rng = crate::rng::rng_from(44);
        let spec = NetworkSpec::mlp(3, &[5], 4); // two groups of 2 bins
        // grouped, with actions
        let mut b = small_batch(&mut rng, 3, 3);
        b.actions = Some(vec![1, 0, 1]);
        let t: Vec<f64> = (0..3)
            .flat_map(|_| {
                let a: f64 = rng.gen_range(0.0..1.0);
                vec![a, 1.0 - a]
            })
            .collect();
        b.targets = Some(t);
        fd_check(&spec, LossSpec::CategoricalCrossEntropy { n_bins: 2 }, &b, 11);

        // ungrouped, every output scored
        let mut b = small_batch(&mut rng, 3, 3);
        let t: Vec<f64> = (0..6)
            .flat_map(|_| {
                let a: f64 = rng.gen_range(0.0..1.0);
                vec![a, 1.0 - a]
            })
            .collect();
        b.targets = Some(t);
        fd_check(&spec, LossSpec::CategoricalCrossEntropy { n_bins: 2 }, &b, 12);
    }

    #[test]
    fn gradients_match_finite_differences_cnn() {
        let mut rng = crate::rng::rng_from(45);
        let spec = NetworkSpec {
            kind: NetworkKind::Cnn {
                conv: vec![ConvSpec { kernel: 2, channels: 2, stride: 1 }],
                dense: vec![],
            },
            input: InputShape::Image { h: 3, w: 3, c: 1 },
            output_dim: 2,
            layer_norm: false,
            spectral_norm: false,
        };
        // conv: 2*(2*2*1)+2 = 10; head: 2*2*2 flatten=8 -> 8*2+2 = 18; total 28
        assert!(spec.param_count() <= 100);
        let mut b = small_batch(&mut rng, 2, 9);
        b.targets = Some((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
        fd_check(&spec, LossSpec::Regression, &b, 13);

        let mut spec_ln = spec.clone();
        spec_ln.layer_norm = true;
        let mut b = small_batch(&mut rng, 2, 9);
        b.targets = Some((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
        fd_check(&spec_ln, LossSpec::Regression, &b, 14);
    }
}
