//! IDX (MNIST) reader.  Images: magic `0x00000803`, count, rows, cols, then
//! `u8` pixels.  Labels: magic `0x00000801`, count, then `u8` labels.  All
//! header words are big-endian.

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(format!("IDX header truncated at byte {at}")))
}

/// Returns `(count, rows, cols, pixels scaled to [0, 1])`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f64>)> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(format!("bad IDX image magic {magic:#010x}")));
    }
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    let expected = n * rows * cols;
    if body.len() != expected {
        return Err(Error::format(format!(
            "IDX image payload has {} bytes, header implies {expected}",
            body.len()
        )));
    }
    Ok((n, rows, cols, body.iter().map(|&b| f64::from(b) / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(format!("bad IDX label magic {magic:#010x}")));
    }
    let n = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::format(format!(
            "IDX label payload has {} bytes, header implies {n}",
            body.len()
        )));
    }
    Ok(body.to_vec())
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for word in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an image/label file pair as `[N, 1, rows, cols]` features.
pub fn load_idx(images_path: &Path, labels_path: &Path, classes: usize) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if labels.len() != n {
        return Err(Error::format(format!(
            "{n} images but {} labels",
            labels.len()
        )));
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::data(format!("label {bad} outside [0, {classes})")));
    }
    Dataset::new(Tensor::new(vec![n, 1, rows, cols], pixels)?, labels, classes)
}
