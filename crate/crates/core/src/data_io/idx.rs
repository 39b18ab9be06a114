//! MNIST IDX files: big-endian magic, dimension sizes, then unsigned bytes.

use std::path::Path;

use super::{Image, LabeledImage};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: offset + 4,
            found: bytes.len(),
            missing: offset + 4 - bytes.len(),
        }),
    }
}

fn check_payload(bytes: &[u8], header: usize, payload: usize, path: &Path) -> Result<()> {
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
            missing: expected - bytes.len(),
        });
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parsed image block: count, rows, cols, and the pixel bytes.
pub(crate) fn parse_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    let payload = count * rows * cols;
    check_payload(bytes, 16, payload, path)?;
    Ok((count, rows, cols, bytes[16..16 + payload].to_vec()))
}

pub(crate) fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(bytes, 4, path)? as usize;
    check_payload(bytes, 8, count, path)?;
    Ok(bytes[8..8 + count].to_vec())
}

/// Loads an MNIST image/label file pair. Pixels are scaled by 1/255 into
/// single-channel images; labels become their decimal strings.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Vec<LabeledImage>> {
    let (count, rows, cols, pixels) = parse_images(&read_file(images)?, images)?;
    let label_bytes = parse_labels(&read_file(labels)?, labels)?;
    if label_bytes.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_bytes.len(),
        });
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Format {
            path: images.to_path_buf(),
            message: format!("degenerate image size {rows}x{cols}"),
        });
    }
    let stride = rows * cols;
    pixels
        .chunks_exact(stride)
        .zip(label_bytes)
        .enumerate()
        .map(|(i, (px, label))| {
            Ok(LabeledImage {
                image: Image::from_u8(rows, cols, 1, px)?,
                label: label.to_string(),
                source: format!("{}#{i}", images.display()),
            })
        })
        .collect()
}
