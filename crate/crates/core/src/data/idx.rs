//! IDX file parsing and writing (the MNIST container format), with
//! transparent gzip decompression.

use std::fs::File;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut decoded = Vec::new();
        flate2::read::GzDecoder::new(Cursor::new(raw)).read_to_end(&mut decoded)?;
        Ok(decoded)
    } else {
        Ok(raw)
    }
}

/// Loads an IDX image file; pixels are scaled to [0, 1].
pub fn load_idx_images(path: &Path) -> Result<Vec<Array2<f64>>> {
    let bytes = read_maybe_gzip(path)?;
    let mut cur = Cursor::new(&bytes);
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Truncated(path.display().to_string()))?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            got: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let count = cur.read_u32::<BigEndian>()? as usize;
    let rows = cur.read_u32::<BigEndian>()? as usize;
    let cols = cur.read_u32::<BigEndian>()? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(Error::Truncated(format!(
            "{}: {} bytes, header wants {}",
            path.display(),
            bytes.len(),
            need
        )));
    }
    let mut images = Vec::with_capacity(count);
    let mut offset = 16;
    for _ in 0..count {
        let img = Array2::from_shape_fn((rows, cols), |(r, c)| {
            bytes[offset + r * cols + c] as f64 / 255.0
        });
        offset += rows * cols;
        images.push(img);
    }
    Ok(images)
}

/// Loads an IDX label file.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_maybe_gzip(path)?;
    let mut cur = Cursor::new(&bytes);
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Truncated(path.display().to_string()))?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            got: magic,
            expected: LABELS_MAGIC,
        });
    }
    let count = cur.read_u32::<BigEndian>()? as usize;
    if bytes.len() < 8 + count {
        return Err(Error::Truncated(path.display().to_string()));
    }
    Ok(bytes[8..8 + count].to_vec())
}

/// Writes images in IDX format (inverse of [`load_idx_images`]); values are
/// clamped to [0, 1] and quantized to bytes.
pub fn write_idx_images(path: &Path, images: &[Array2<f64>]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_u32::<BigEndian>(IMAGES_MAGIC)?;
    f.write_u32::<BigEndian>(images.len() as u32)?;
    let (rows, cols) = if images.is_empty() {
        (0, 0)
    } else {
        images[0].dim()
    };
    f.write_u32::<BigEndian>(rows as u32)?;
    f.write_u32::<BigEndian>(cols as u32)?;
    for img in images {
        for v in img.iter() {
            f.write_all(&[(v.clamp(0.0, 1.0) * 255.0).round() as u8])?;
        }
    }
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_u32::<BigEndian>(LABELS_MAGIC)?;
    f.write_u32::<BigEndian>(labels.len() as u32)?;
    f.write_all(labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn sample_images() -> Vec<Array2<f64>> {
        (0..3)
            .map(|i| Array2::from_shape_fn((28, 28), |(r, c)| ((r + c + i) % 7) as f64 / 7.0))
            .collect()
    }

    #[test]
    fn images_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.idx");
        let images = sample_images();
        write_idx_images(&path, &images).unwrap();
        let loaded = load_idx_images(&path).unwrap();
        assert_eq!(loaded.len(), 3);
        for (a, b) in loaded.iter().zip(images.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn gzip_and_raw_agree() {
        let dir = tempfile::tempdir().unwrap();
        let raw_path = dir.path().join("img.idx");
        write_idx_images(&raw_path, &sample_images()).unwrap();
        let gz_path = dir.path().join("img.idx.gz");
        let bytes = std::fs::read(&raw_path).unwrap();
        let mut enc =
            flate2::write::GzEncoder::new(File::create(&gz_path).unwrap(), Default::default());
        enc.write_all(&bytes).unwrap();
        enc.finish().unwrap();
        let a = load_idx_images(&raw_path).unwrap();
        let b = load_idx_images(&gz_path).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn bad_magic_and_truncation_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.idx");
        std::fs::write(&path, [0u8, 0, 8, 4, 0, 0, 0, 1]).unwrap();
        assert!(matches!(
            load_idx_images(&path),
            Err(Error::BadMagic { .. })
        ));
        // valid magic, truncated payload
        let mut f = File::create(&path).unwrap();
        f.write_u32::<BigEndian>(IMAGES_MAGIC).unwrap();
        f.write_u32::<BigEndian>(5).unwrap();
        f.write_u32::<BigEndian>(28).unwrap();
        f.write_u32::<BigEndian>(28).unwrap();
        f.write_all(&[0u8; 100]).unwrap();
        drop(f);
        assert!(matches!(load_idx_images(&path), Err(Error::Truncated(_))));
    }

    #[test]
    fn labels_round_trip_and_magic_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.idx");
        write_idx_labels(&path, &[3, 1, 4, 1, 5]).unwrap();
        assert_eq!(load_idx_labels(&path).unwrap(), vec![3, 1, 4, 1, 5]);
        write_idx_images(&path, &sample_images()).unwrap();
        assert!(matches!(
            load_idx_labels(&path),
            Err(Error::BadMagic { .. })
        ));
    }
}
