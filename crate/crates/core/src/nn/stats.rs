//! Diagnostics computed on a network at a point in training: weight norm,
//! effective ranks of weight matrices and features, and dead-unit counts.

use nalgebra::DMatrix;

use super::{forward, Batch, LayerKind, NetworkSpec, ParamVector};
use crate::error::{PlabError, Result};

/// Default mass fraction ignored by the effective rank (`delta`).
pub const RANK_DELTA: f64 = 0.01;

/// Smallest `k` such that the top-`k` singular values carry at least a
/// `1 - delta` fraction of the total singular-value mass. Zero matrices
/// have rank 0.
pub fn effective_rank(data: &[f64], rows: usize, cols: usize, delta: f64) -> usize {
    assert_eq!(data.len(), rows * cols, "matrix shape mismatch");
    if rows == 0 || cols == 0 {
        return 0;
    }
    let m = DMatrix::from_row_slice(rows, cols, data);
    let mut sv: Vec<f64> = m.singular_values().iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    let total: f64 = sv.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let need = (1.0 - delta) * total;
    let mut acc = 0.0;
    for (k, s) in sv.iter().enumerate() {
        acc += s;
        if acc >= need {
            return k + 1;
        }
    }
    sv.len()
}

/// Snapshot of the quantities tracked while training.
#[derive(Clone, Debug)]
pub struct NetworkStats {
    /// Euclidean norm of the full parameter vector.
    pub weight_norm: f64,
    /// Mean effective rank of the per-layer weight matrices.
    pub weight_rank: f64,
    /// Effective rank of the last hidden layer's activations on the batch.
    pub feature_rank: usize,
    /// Upper bound on `feature_rank`: min(batch size, layer width).
    pub feature_rank_cap: usize,
    /// Fraction of hidden activation coordinates that are zero on every
    /// sample in the batch.
    pub dead_fraction: f64,
    /// Number of hidden activation coordinates inspected.
    pub n_hidden_units: usize,
}

/// Compute [`NetworkStats`] for `params` on a probe batch.
pub fn network_stats(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
) -> Result<NetworkStats> {
    let layout = spec.layout()?;
    let (_, trace) = forward(spec, params, batch, true)?;
    let trace = trace.expect("trace requested");

    let weight_norm = params.l2_norm();

    let mut rank_sum = 0.0;
    for layer in &layout.layers {
        let (rows, cols) = match layer.kind {
            LayerKind::Dense { in_dim, out_dim } => (out_dim, in_dim),
            LayerKind::Conv { out_c, .. } => (out_c, layer.fan_in),
        };
        let w = &params.as_slice()[layer.w_off..layer.w_off + layer.w_len];
        rank_sum += effective_rank(w, rows, cols, RANK_DELTA) as f64;
    }
    let weight_rank = rank_sum / layout.layers.len() as f64;

    let (feature_rank, feature_rank_cap) = match trace.penultimate() {
        Some((feats, width)) => (
            effective_rank(feats, trace.n, width, RANK_DELTA),
            trace.n.min(width),
        ),
        None => (0, 0),
    };

    let mut dead = 0usize;
    let mut total = 0usize;
    for (acts, &width) in trace.layers.iter().zip(&trace.widths) {
        total += width;
        for j in 0..width {
            let alive = (0..trace.n).any(|i| acts[i * width + j] != 0.0);
            if !alive {
                dead += 1;
            }
        }
    }
    if total == 0 {
        return Err(PlabError::DegenerateInput(
            "network has no hidden units to inspect".into(),
        ));
    }

    Ok(NetworkStats {
        weight_norm,
        weight_rank,
        feature_rank,
        feature_rank_cap,
        dead_fraction: dead as f64 / total as f64,
        n_hidden_units: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::build_network;

    #[test]
    fn effective_rank_of_identity_is_full() {
        let n = 10;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        assert_eq!(effective_rank(&m, n, n, RANK_DELTA), n);
    }

    #[test]
    fn effective_rank_collapses_with_dominant_direction() {
        // singular values 100, 0.5, 0.5: the top one holds 100/101 > 99%.
        let m = vec![
            100.0, 0.0, 0.0, //
            0.0, 0.5, 0.0, //
            0.0, 0.0, 0.5,
        ];
        assert_eq!(effective_rank(&m, 3, 3, RANK_DELTA), 1);
    }

    #[test]
    fn effective_rank_of_zero_matrix_is_zero() {
        assert_eq!(effective_rank(&[0.0; 12], 3, 4, RANK_DELTA), 0);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [1.0, 2.0, 3.0];
        let v = [0.5, -1.0];
        let mut m = vec![0.0; 6];
        for i in 0..3 {
            for j in 0..2 {
                m[i * 2 + j] = u[i] * v[j];
            }
        }
        assert_eq!(effective_rank(&m, 3, 2, RANK_DELTA), 1);
    }

    #[test]
    fn dead_units_are_counted() {
        let spec = NetworkSpec::mlp(2, &[3], 1);
        let layout = spec.layout().unwrap();
        let mut params = build_network(&spec, 3).unwrap();
        // force unit 1 of the hidden layer dead: zero weights, bias -1
        let l0 = &layout.layers[0];
        params[l0.w_off + 2] = 0.0;
        params[l0.w_off + 3] = 0.0;
        params[l0.b_off + 1] = -1.0;
        let batch = Batch::from_inputs(vec![0.1, 0.9, -0.4, 0.3, 0.7, -0.2], 3);
        let stats = network_stats(&spec, &params, &batch).unwrap();
        assert_eq!(stats.n_hidden_units, 3);
        assert!(stats.dead_fraction >= 1.0 / 3.0 - 1e-12);
    }

    #[test]
    fn stats_have_sane_ranges_on_fresh_network() {
        let spec = NetworkSpec::mlp(6, &[8, 8], 4);
        let params = build_network(&spec, 9).unwrap();
        let mut rng = crate::rng::rng_from(10);
        use rand::Rng;
        let batch =
            Batch::from_inputs((0..12 * 6).map(|_| rng.gen_range(0.0..1.0)).collect(), 12);
        let s = network_stats(&spec, &params, &batch).unwrap();
        assert!(s.weight_norm > 0.0);
        assert!(s.weight_rank >= 1.0);
        assert!(s.feature_rank >= 1 && s.feature_rank <= s.feature_rank_cap);
        assert_eq!(s.feature_rank_cap, 8);
        assert!((0.0..=1.0).contains(&s.dead_fraction));
        assert_eq!(s.n_hidden_units, 16);
    }
}
