//! CIFAR-10 binary-version loader.
//!
//! Each record is 3073 bytes: one label byte, then 3072 pixel bytes stored
//! channel-major (1024 red, 1024 green, 1024 blue, each row-major 32x32).
//! We convert to interleaved HWC and scale by 1/255.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{PlabError, Result};
use crate::nn::InputShape;

const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
const RECORD: usize = 1 + 3 * PLANE;

/// Load one or more CIFAR-10 binary batch files, concatenated in order.
pub fn load_cifar10(paths: &[impl AsRef<Path>]) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(PlabError::Config("no cifar batch files given".into()));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let bytes = fs::read(p)?;
        if bytes.is_empty() || bytes.len() % RECORD != 0 {
            return Err(PlabError::Data(format!(
                "{}: length {} is not a positive multiple of {RECORD}",
                p.display(),
                bytes.len()
            )));
        }
        for rec in bytes.chunks_exact(RECORD) {
            labels.push(rec[0]);
            let px = &rec[1..];
            for h in 0..SIDE {
                for w in 0..SIDE {
                    for c in 0..3 {
                        images.push(px[c * PLANE + h * SIDE + w] as f64 / 255.0);
                    }
                }
            }
        }
    }
    let ds = Dataset {
        n: labels.len(),
        images,
        labels,
        shape: InputShape::Image {
            h: SIDE,
            w: SIDE,
            c: 3,
        },
        name: "cifar10".into(),
    };
    ds.validate()?;
    Ok(ds)
}
