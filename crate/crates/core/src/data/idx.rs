//! IDX-format loader (the MNIST file format).
//!
//! Big-endian headers: images carry magic 2051 and dimensions
//! `[n, rows, cols]`, labels carry magic 2049 and `[n]`. Pixel bytes are
//! scaled by 1/255.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{PlabError, Result};
use crate::nn::InputShape;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    name: String,
}

impl<'a> Cursor<'a> {
    fn u32_be(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(PlabError::Data(format!(
                "{}: truncated at byte {} (wanted {n} more)",
                self.name, self.pos
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(PlabError::Data(format!(
                "{}: {} trailing bytes",
                self.name,
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn cursor<'a>(data: &'a [u8], path: &Path) -> Cursor<'a> {
    Cursor {
        data,
        pos: 0,
        name: path.display().to_string(),
    }
}

/// Load an MNIST-style image/label file pair.
pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = fs::read(images_path)?;
    let mut img = cursor(&img_bytes, images_path);
    let magic = img.u32_be()?;
    if magic != IMAGE_MAGIC {
        return Err(PlabError::Data(format!(
            "{}: bad image magic {magic} (want {IMAGE_MAGIC})",
            images_path.display()
        )));
    }
    let n = img.u32_be()? as usize;
    let rows = img.u32_be()? as usize;
    let cols = img.u32_be()? as usize;
    let pixels = img.bytes(n * rows * cols)?;
    img.done()?;

    let lbl_bytes = fs::read(labels_path)?;
    let mut lbl = cursor(&lbl_bytes, labels_path);
    let magic = lbl.u32_be()?;
    if magic != LABEL_MAGIC {
        return Err(PlabError::Data(format!(
            "{}: bad label magic {magic} (want {LABEL_MAGIC})",
            labels_path.display()
        )));
    }
    let n_labels = lbl.u32_be()? as usize;
    if n_labels != n {
        return Err(PlabError::Data(format!(
            "{} images but {n_labels} labels",
            n
        )));
    }
    let labels = lbl.bytes(n)?.to_vec();
    lbl.done()?;

    let images: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let ds = Dataset {
        images,
        labels,
        n,
        shape: InputShape::Image {
            h: rows,
            w: cols,
            c: 1,
        },
        name: "mnist".into(),
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx_images(n: usize, rows: usize, cols: usize, px: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&IMAGE_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(n as u32).to_be_bytes()).unwrap();
        f.write_all(&(rows as u32).to_be_bytes()).unwrap();
        f.write_all(&(cols as u32).to_be_bytes()).unwrap();
        f.write_all(px).unwrap();
        f
    }

    fn write_idx_labels(labels: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&LABEL_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
        f
    }

    fn round_robin(n: usize) -> Vec<u8> {
        (0..n).map(|i| (i % 10) as u8).collect()
    }

    #[test]
    fn parses_and_scales() {
        let n = 10;
        let px: Vec<u8> = (0..n * 4).map(|i| (i * 7 % 256) as u8).collect();
        let imgs = write_idx_images(n, 2, 2, &px);
        let lbls = write_idx_labels(&round_robin(n));
        let ds = load_mnist(imgs.path(), lbls.path()).unwrap();
        assert_eq!(ds.n, 10);
        assert_eq!(ds.shape, InputShape::Image { h: 2, w: 2, c: 1 });
        assert_eq!(ds.images[1], 7.0 / 255.0);
        // byte 255 maps to exactly 1.0
        let one = px.iter().position(|&b| b == 0).unwrap();
        assert_eq!(ds.images[one], 0.0);
    }

    #[test]
    fn byte_255_is_one() {
        let imgs = write_idx_images(10, 1, 1, &[255; 10]);
        let lbls = write_idx_labels(&round_robin(10));
        let ds = load_mnist(imgs.path(), lbls.path()).unwrap();
        assert!(ds.images.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&2052u32.to_be_bytes()).unwrap();
        f.write_all(&[0u8; 12]).unwrap();
        let lbls = write_idx_labels(&round_robin(10));
        assert!(matches!(
            load_mnist(f.path(), lbls.path()),
            Err(PlabError::Data(_))
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let px: Vec<u8> = vec![0; 10 * 4 - 1]; // one byte short
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&IMAGE_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&10u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&px).unwrap();
        let lbls = write_idx_labels(&round_robin(10));
        assert!(matches!(
            load_mnist(f.path(), lbls.path()),
            Err(PlabError::Data(_))
        ));
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let imgs = write_idx_images(10, 1, 1, &[128; 10]);
        let mut bad = round_robin(10);
        bad[3] = 11;
        let lbls = write_idx_labels(&bad);
        assert!(load_mnist(imgs.path(), lbls.path()).is_err());
    }
}
