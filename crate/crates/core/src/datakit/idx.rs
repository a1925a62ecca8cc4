//! IDX ingestion (the MNIST container format).
//!
//! Files may be stored raw or gzip-compressed; byte offsets in errors always
//! refer to the decompressed stream.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{Dataset, Provenance, Source};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format(0, format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::format(
                bytes.len() as u64,
                format!("header truncated: need {} bytes, have {}", offset + 4, bytes.len()),
            )
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    if bytes.is_empty() {
        return Err(Error::format(0, "empty file"));
    }
    let magic = be_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::format(
            0,
            format!("magic {magic:#010x}, expected {expected:#010x}"),
        ));
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], start: usize, len: usize) -> Result<&'a [u8]> {
    bytes.get(start..start + len).ok_or_else(|| {
        Error::format(
            bytes.len() as u64,
            format!("payload truncated: need {} bytes, have {}", start + len, bytes.len()),
        )
    })
}

/// Parses an image file into `(count, rows * cols, pixels / 255)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let dim = rows * cols;
    let px = payload(bytes, 16, n * dim)?;
    Ok((n, dim, px.iter().map(|&b| f64::from(b) / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, n)?.iter().map(|&b| b as usize).collect())
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let (n, dim, pixels) = parse_idx_images(&read_maybe_gz(ip)?)?;
    let labels = parse_idx_labels(&read_maybe_gz(lp)?)?;
    if labels.len() != n {
        // offset of the count field in the labels header
        return Err(Error::format(
            4,
            format!("{} labels for {n} images", labels.len()),
        ));
    }
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(
        Matrix::from_vec(n, dim, pixels),
        labels,
        num_classes,
        Provenance::new(Source::Idx {
            images: ip.display().to_string(),
            labels: lp.display().to_string(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn two_image_fixture() {
        let mut img = header(IMAGES_MAGIC, &[2, 28, 28]);
        img.extend(std::iter::repeat(0u8).take(784));
        img.extend(std::iter::repeat(255u8).take(784));
        let mut lab = header(LABELS_MAGIC, &[2]);
        lab.extend([0u8, 7]);

        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&ip, &img).unwrap();
        std::fs::write(&lp, &lab).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.features.shape(), (2, 784));
        assert_eq!(ds.labels, vec![0, 7]);
        assert_eq!(ds.input(1)[5], 1.0);
    }

    #[test]
    fn wrong_magic_and_empty() {
        let lab = header(IMAGES_MAGIC, &[1]);
        assert!(matches!(parse_idx_labels(&lab), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(parse_idx_labels(&[]), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let mut img = header(IMAGES_MAGIC, &[2, 2, 2]);
        img.extend([1u8, 2, 3]);
        match parse_idx_images(&img) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 19),
            other => panic!("{other:?}"),
        }
    }
}
