//! Spectral normalization of a weight matrix.
//!
//! The largest singular value is estimated by power iteration on `W^T W`
//! with a persistent left/right vector pair, so a single iteration per
//! training step tracks the slowly-moving spectrum. Dividing the matrix by
//! the estimate pins its spectral norm at one.

use rand::Rng;

use super::EPS_SN;

/// Persistent power-iteration vectors for one weight matrix.
#[derive(Clone, Debug)]
pub struct SpectralNormState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SpectralNormState {
    /// Fresh state with a random unit left vector.
    pub fn new(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let mut u: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&u);
        if n > 0.0 {
            for x in u.iter_mut() {
                *x /= n;
            }
        } else {
            u[0] = 1.0;
        }
        SpectralNormState {
            u,
            v: vec![0.0; cols],
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One power-iteration sweep; returns the current singular-value estimate,
/// or 0 when the matrix is (numerically) zero.
fn sweep(w: &[f64], rows: usize, cols: usize, state: &mut SpectralNormState) -> f64 {
    // v <- W^T u / |.|
    for j in 0..cols {
        state.v[j] = 0.0;
    }
    for i in 0..rows {
        let ui = state.u[i];
        let row = &w[i * cols..(i + 1) * cols];
        for j in 0..cols {
            state.v[j] += ui * row[j];
        }
    }
    let nv = norm(&state.v);
    if nv <= EPS_SN {
        return 0.0;
    }
    for x in state.v.iter_mut() {
        *x /= nv;
    }
    // u <- W v / |.|
    for i in 0..rows {
        let row = &w[i * cols..(i + 1) * cols];
        state.u[i] = row.iter().zip(&state.v).map(|(a, b)| a * b).sum();
    }
    let nu = norm(&state.u);
    if nu <= EPS_SN {
        return 0.0;
    }
    for x in state.u.iter_mut() {
        *x /= nu;
    }
    // sigma = u^T W v with unit u, v
    let mut sigma = 0.0;
    for i in 0..rows {
        let row = &w[i * cols..(i + 1) * cols];
        let wv: f64 = row.iter().zip(&state.v).map(|(a, b)| a * b).sum();
        sigma += state.u[i] * wv;
    }
    sigma
}

/// Estimate the spectral norm of `w` (`rows x cols`, row-major) and divide
/// the matrix by it in place. Returns the estimate. Zero matrices are left
/// untouched and report 0.
pub fn spectral_normalize_layer(
    w: &mut [f64],
    rows: usize,
    cols: usize,
    state: &mut SpectralNormState,
    iters: usize,
) -> f64 {
    assert_eq!(w.len(), rows * cols, "matrix shape mismatch");
    assert_eq!(state.u.len(), rows, "state shape mismatch");
    assert_eq!(state.v.len(), cols, "state shape mismatch");
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        sigma = sweep(w, rows, cols, state);
        if sigma == 0.0 {
            return 0.0;
        }
    }
    for x in w.iter_mut() {
        *x /= sigma;
    }
    sigma
}
