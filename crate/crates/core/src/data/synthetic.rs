//! Synthetic ten-class Gaussian blobs.
//!
//! Class means sit at `0.5 + 0.5 * d_c` for near-orthogonal unit
//! directions `d_c`; samples add per-pixel Gaussian noise (sigma 0.1) and
//! clip to `[0,1]`. At moderate dimension the blobs are linearly separable
//! with overwhelming probability, so they stand in for image data in tests
//! and fast runs without any downloads.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, NUM_CLASSES};
use crate::error::Result;
use crate::nn::InputShape;
use crate::rng::{stream, stream_rng};

/// Per-pixel noise scale.
const SIGMA: f64 = 0.1;
/// Distance of each class mean from the center point 0.5.
const MEAN_SCALE: f64 = 0.5;

/// Near-orthogonal unit directions, one per class: a QR basis when the
/// dimension allows, plain normalized Gaussian draws for the remainder.
fn class_directions(dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let k = NUM_CLASSES.min(dim);
    let g = DMatrix::from_fn(dim, k, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    let mut dirs: Vec<Vec<f64>> = (0..k).map(|c| q.column(c).iter().cloned().collect()).collect();
    while dirs.len() < NUM_CLASSES {
        let mut d: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in d.iter_mut() {
            *v /= n.max(1e-300);
        }
        dirs.push(d);
    }
    dirs
}

/// Build `n_per_class * 10` samples in `dim` dimensions, classes
/// interleaved so any prefix is roughly balanced.
pub fn synthetic_dataset(n_per_class: usize, dim: usize, seed: u64) -> Result<Dataset> {
    assert!(n_per_class >= 1, "need at least one sample per class");
    assert!(dim >= 1, "need at least one dimension");
    let mut rng = stream_rng(seed, stream::DATASET, 0);
    let dirs = class_directions(dim, &mut rng);
    let means: Vec<Vec<f64>> = dirs
        .iter()
        .map(|d| d.iter().map(|v| 0.5 + MEAN_SCALE * v).collect())
        .collect();

    let n = n_per_class * NUM_CLASSES;
    let mut images = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n_per_class {
        for c in 0..NUM_CLASSES {
            labels.push(c as u8);
            for j in 0..dim {
                let noise: f64 = StandardNormal.sample(&mut rng);
                images.push((means[c][j] + SIGMA * noise).clamp(0.0, 1.0));
            }
        }
    }
    let ds = Dataset {
        images,
        labels,
        n,
        shape: InputShape::Flat(dim),
        name: format!("synthetic-{dim}d"),
    };
    ds.validate()?;
    Ok(ds)
}
