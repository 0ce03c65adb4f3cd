//! IDX image/label files (the MNIST distribution format).
//!
//! Both files start with a big-endian magic number whose third byte is the
//! element type (`0x08`, unsigned byte) and whose fourth byte is the number
//! of dimensions, followed by one big-endian `u32` per dimension.

use std::fs;
use std::path::Path;

use fedsim_core::data::LabeledDataset;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Parse failure at a byte offset into the file.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("byte {offset}: {message}")]
pub struct IdxError {
    pub offset: u64,
    pub message: String,
}

fn fail<T>(offset: usize, message: impl Into<String>) -> Result<T, IdxError> {
    Err(IdxError { offset: offset as u64, message: message.into() })
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32, IdxError> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => fail(bytes.len(), format!("file truncated while reading {what}")),
    }
}

/// Returns the dimensions and the payload slice.
fn parse<'a>(bytes: &'a [u8], magic: u32, kind: &str) -> Result<(Vec<usize>, &'a [u8]), IdxError> {
    let found = read_u32(bytes, 0, "the magic number")?;
    if found != magic {
        return fail(0, format!("bad magic number 0x{found:08x} for {kind} (expected 0x{magic:08x})"));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|i| read_u32(bytes, 4 + 4 * i, "a dimension").map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let start = 4 + 4 * ndim;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(IdxError { offset: 4, message: "dimensions overflow".into() })?;
    let end = start + len;
    if bytes.len() < end {
        return fail(bytes.len(), format!("file truncated: header promises {len} data bytes from byte {start}"));
    }
    if bytes.len() > end {
        return fail(end, format!("{} trailing bytes after the data", bytes.len() - end));
    }
    Ok((dims, &bytes[start..end]))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let (dims, data) = parse(bytes, IMAGES_MAGIC, "images")?;
    Ok(IdxImages { count: dims[0], rows: dims[1], cols: dims[2], pixels: data.to_vec() })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    Ok(parse(bytes, LABELS_MAGIC, "labels")?.1.to_vec())
}

/// Joins an image file and a label file into a dataset with pixels scaled
/// to `[0, 1]` and as many classes as the largest label requires.
pub fn dataset_from_bytes(images: &[u8], labels: &[u8]) -> Result<LabeledDataset, IdxError> {
    let images = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if labels.len() != images.count {
        return fail(4, format!("label count {} does not match image count {}", labels.len(), images.count));
    }
    let dim = images.rows * images.cols;
    if dim == 0 || images.count == 0 {
        return fail(4, "empty images");
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1).max(2);
    let covariates = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels = labels.iter().map(|&l| l as usize).collect();
    LabeledDataset::new(dim, classes, covariates, labels).map_err(|e| IdxError { offset: 0, message: e.to_string() })
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let img = fs::read(images).map_err(|e| Error::io(images, e))?;
    let lbl = fs::read(labels).map_err(|e| Error::io(labels, e))?;
    // blame the file the error came from
    parse_images(&img).map_err(|e| Error::Idx { path: images.into(), offset: e.offset, message: e.message })?;
    dataset_from_bytes(&img, &lbl).map_err(|e| Error::Idx { path: labels.into(), offset: e.offset, message: e.message })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = IMAGES_MAGIC.to_be_bytes().to_vec();
        for d in [count, rows, cols] {
            b.extend(d.to_be_bytes());
        }
        b.extend(pixels);
        b
    }

    pub(crate) fn labels(values: &[u8]) -> Vec<u8> {
        let mut b = LABELS_MAGIC.to_be_bytes().to_vec();
        b.extend((values.len() as u32).to_be_bytes());
        b.extend(values);
        b
    }

    #[test]
    fn header_layout() {
        let img = images(2, 1, 2, &[0, 255, 51, 102]);
        assert_eq!(&img[..4], &[0, 0, 8, 3]);
        let parsed = parse_images(&img).unwrap();
        assert_eq!((parsed.count, parsed.rows, parsed.cols), (2, 1, 2));
        let data = dataset_from_bytes(&img, &labels(&[1, 0])).unwrap();
        assert_eq!(data.covariate(0), [0.0, 1.0]);
        assert_eq!(data.covariate(1), [0.2, 0.4]);
        assert_eq!(data.labels(), [1, 0]);
        assert_eq!(data.classes(), 2);
    }

    #[test]
    fn errors_carry_offsets() {
        let mut bad = images(1, 1, 1, &[0]);
        bad[3] = 0x01;
        assert_eq!(parse_images(&bad).unwrap_err().offset, 0);
        // labels magic presented as images
        assert_eq!(parse_images(&labels(&[1])).unwrap_err().offset, 0);
        let short = images(2, 2, 2, &[1, 2, 3]);
        assert_eq!(parse_images(&short).unwrap_err().offset, short.len() as u64);
        assert_eq!(parse_images(&[0, 0, 8]).unwrap_err().offset, 3);
        assert_eq!(parse_images(&images(1, 1, 1, &[0])[..10]).unwrap_err().offset, 10);
        let long = labels(&[1, 2]).into_iter().chain([9]).collect::<Vec<_>>();
        assert_eq!(parse_labels(&long).unwrap_err().offset, 10);
        let mismatch = dataset_from_bytes(&images(2, 1, 1, &[0, 0]), &labels(&[0])).unwrap_err();
        assert_eq!(mismatch.offset, 4);
    }
}
