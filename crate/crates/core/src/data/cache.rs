//! Binary dataset cache.
//!
//! Layout, all multi-byte fields little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "PLAB"
//! 4       4           version (u32, currently 1)
//! 8       16          n, h, w, c (u32 each)
//! 24      n           labels (u8)
//! 24+n    8*n*h*w*c   pixels (f64 bits)
//! ```
//!
//! Flat datasets are stored as `h = w = 1, c = dim`. Round-trips are
//! bit-exact, so cached data feeds deterministic runs safely.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{PlabError, Result};
use crate::nn::InputShape;

const MAGIC: &[u8; 4] = b"PLAB";
const VERSION: u32 = 1;

/// Write `ds` to `path` in the cache format.
pub fn write_cache(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let (h, w, c) = match ds.shape {
        InputShape::Image { h, w, c } => (h, w, c),
        InputShape::Flat(d) => (1, 1, d),
    };
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    for v in [ds.n, h, w, c] {
        f.write_all(&(v as u32).to_le_bytes())?;
    }
    f.write_all(&ds.labels)?;
    for &px in &ds.images {
        f.write_all(&px.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| PlabError::Data(format!("cache truncated reading {what}")))?;
    Ok(u32::from_le_bytes(b))
}

/// Read a dataset previously written by [`write_cache`].
pub fn read_cache(path: &Path) -> Result<Dataset> {
    let mut f = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)
        .map_err(|_| PlabError::Data("cache truncated reading magic".into()))?;
    if &magic != MAGIC {
        return Err(PlabError::Data(format!(
            "{}: not a dataset cache (magic {:?})",
            path.display(),
            magic
        )));
    }
    let version = read_u32(&mut f, "version")?;
    if version != VERSION {
        return Err(PlabError::Data(format!(
            "{}: cache version {version}, expected {VERSION}",
            path.display()
        )));
    }
    let n = read_u32(&mut f, "n")? as usize;
    let h = read_u32(&mut f, "h")? as usize;
    let w = read_u32(&mut f, "w")? as usize;
    let c = read_u32(&mut f, "c")? as usize;
    let mut labels = vec![0u8; n];
    f.read_exact(&mut labels)
        .map_err(|_| PlabError::Data("cache truncated reading labels".into()))?;
    let dim = h * w * c;
    let mut images = Vec::with_capacity(n * dim);
    let mut buf = [0u8; 8];
    for _ in 0..n * dim {
        f.read_exact(&mut buf)
            .map_err(|_| PlabError::Data("cache truncated reading pixels".into()))?;
        images.push(f64::from_le_bytes(buf));
    }
    let mut tail = [0u8; 1];
    if f.read(&mut tail)? != 0 {
        return Err(PlabError::Data("cache has trailing bytes".into()));
    }
    let shape = if h == 1 && w == 1 {
        InputShape::Flat(c)
    } else {
        InputShape::Image { h, w, c }
    };
    let ds = Dataset {
        images,
        labels,
        n,
        shape,
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "cache".into()),
    };
    ds.validate()?;
    Ok(ds)
}
