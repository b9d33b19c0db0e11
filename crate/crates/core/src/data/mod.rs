//! Datasets: loaders for MNIST-style IDX and CIFAR-10 binary files, a
//! synthetic Gaussian-blob fallback that needs no downloads, label
//! assignment (true or randomized), and a binary cache.
//!
//! Pixels are `f64` in `[0,1]`; labels are the ten classes `0..=9`
//! everywhere in this crate.

mod cache;
mod cifar;
mod idx;
mod synthetic;

pub use cache::{read_cache, write_cache};
pub use cifar::load_cifar10;
pub use idx::load_mnist;
pub use synthetic::synthetic_dataset;

use rand::Rng;

use crate::error::{PlabError, Result};
use crate::nn::InputShape;
use crate::rng::{stream, stream_rng};

/// Number of classes; fixed by the ten-state latent space.
pub const NUM_CLASSES: usize = 10;

/// An immutable image dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Row-major `n x dim` pixel values in `[0,1]`.
    pub images: Vec<f64>,
    /// Per-image class in `0..NUM_CLASSES`.
    pub labels: Vec<u8>,
    pub n: usize,
    pub shape: InputShape,
    pub name: String,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.images[i * d..(i + 1) * d]
    }

    /// Enforce shape/label invariants: sizes consistent, pixels in `[0,1]`,
    /// at least 10 images with every class present.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.images.len() != self.n * d || self.labels.len() != self.n {
            return Err(PlabError::Data(format!(
                "dataset {}: {} images x dim {} does not match buffers",
                self.name, self.n, d
            )));
        }
        if self.n < NUM_CLASSES {
            return Err(PlabError::Data(format!(
                "dataset {}: need at least {NUM_CLASSES} images, got {}",
                self.name, self.n
            )));
        }
        let mut seen = [false; NUM_CLASSES];
        for &l in &self.labels {
            if (l as usize) >= NUM_CLASSES {
                return Err(PlabError::Data(format!(
                    "dataset {}: label {l} out of range",
                    self.name
                )));
            }
            seen[l as usize] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(PlabError::Data(format!(
                "dataset {}: some class has no images",
                self.name
            )));
        }
        if let Some(bad) = self.images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(PlabError::Data(format!(
                "dataset {}: pixel {bad} outside [0,1]",
                self.name
            )));
        }
        Ok(())
    }

    /// A seeded shuffle followed by truncation to the first `n` images.
    pub fn subset_shuffled(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 || n > self.n {
            return Err(PlabError::Config(format!(
                "subset of {n} from {} images",
                self.n
            )));
        }
        let mut idx: Vec<usize> = (0..self.n).collect();
        let mut rng = stream_rng(seed, stream::DATASET, 1);
        // Fisher-Yates, then keep the head
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        idx.truncate(n);
        let d = self.dim();
        let mut images = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for &i in &idx {
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            images,
            labels,
            n,
            shape: self.shape,
            name: format!("{}[{n}]", self.name),
        })
    }
}

/// Whether labels are the dataset's own or a seeded random table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelMode {
    True,
    Random,
}

/// Image-index to label table with a per-class index for sampling.
#[derive(Clone, Debug)]
pub struct LabelAssignment {
    pub mode: LabelMode,
    pub table: Vec<u8>,
    by_class: Vec<Vec<u32>>,
}

fn index_by_class(table: &[u8]) -> Vec<Vec<u32>> {
    let mut by_class = vec![Vec::new(); NUM_CLASSES];
    for (i, &l) in table.iter().enumerate() {
        by_class[l as usize].push(i as u32);
    }
    by_class
}

impl LabelAssignment {
    /// Use the dataset's own labels.
    pub fn true_labels(ds: &Dataset) -> Self {
        LabelAssignment {
            mode: LabelMode::True,
            by_class: index_by_class(&ds.labels),
            table: ds.labels.clone(),
        }
    }

    /// Images assigned to `class`, possibly none.
    pub fn class_count(&self, class: usize) -> usize {
        self.by_class[class].len()
    }

    /// Draw a uniform image index whose assigned label is `class`.
    pub fn sample_class(&self, class: usize, rng: &mut impl Rng) -> Result<usize> {
        let pool = &self.by_class[class];
        if pool.is_empty() {
            return Err(PlabError::DegenerateInput(format!(
                "no images assigned to class {class}"
            )));
        }
        Ok(pool[rng.gen_range(0..pool.len())] as usize)
    }
}

/// Assign each image an independent uniform label.
///
/// `round` selects the draw within the run: the study that repeatedly
/// re-randomizes labels over the same images passes 0, 1, 2, ... here.
pub fn randomize_labels(ds: &Dataset, seed: u64, round: u64) -> LabelAssignment {
    let mut rng = stream_rng(seed, stream::LABELS, round);
    let table: Vec<u8> = (0..ds.n)
        .map(|_| rng.gen_range(0..NUM_CLASSES as u8))
        .collect();
    LabelAssignment {
        mode: LabelMode::Random,
        by_class: index_by_class(&table),
        table,
    }
}
