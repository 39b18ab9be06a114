//! Binary PGM (P5) and PPM (P6) images, and class-per-directory datasets.

use std::path::{Path, PathBuf};

use super::{Image, LabeledImage};
use crate::error::{Error, Result};

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn header_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Decodes a P5/P6 image. Samples are divided by maxval; 16-bit samples
/// (maxval > 255) are big-endian.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(format_err(path, "unsupported format magic (expected P5 or P6)")),
    };
    let mut pos = 2;
    let mut field = |name: &str| -> Result<usize> {
        header_token(bytes, &mut pos)
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| format_err(path, format!("missing or invalid {name} in header")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_err(path, format!("degenerate size {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(path, format!("maxval {maxval} out of range 1..65535")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let samples = width * height * channels;
    let sample_bytes = if maxval > 255 { 2 } else { 1 };
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < samples * sample_bytes {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: pos + samples * sample_bytes,
            found: bytes.len(),
            missing: samples * sample_bytes - raster.len(),
        });
    }
    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = if sample_bytes == 1 {
        raster[..samples]
            .iter()
            .map(|&b| (f64::from(b) * scale).min(1.0))
            .collect()
    } else {
        raster[..samples * 2]
            .chunks_exact(2)
            .map(|b| (f64::from(u16::from_be_bytes([b[0], b[1]])) * scale).min(1.0))
            .collect()
    };
    Image::new(height, width, channels, data)
}

/// Encodes as P5 (one channel) or P6 (three channels) with maxval 255.
pub fn encode_pnm(image: &Image) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.to_u8());
    out
}

pub fn write_pnm(image: &Image, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pnm(image)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Default)]
pub struct DirLoad {
    pub images: Vec<LabeledImage>,
    /// Files that could not be decoded, with the reason. Loading continues past them.
    pub failures: Vec<(PathBuf, String)>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads `root/<class>/<file>` images; the label is the subdirectory name.
/// Classes and files are visited in lexicographic order. When `channels` is
/// given every image is converted to that channel count.
pub fn load_image_dir(root: &Path, channels: Option<usize>) -> Result<DirLoad> {
    let mut out = DirLoad::default();
    for class_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let label = class_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        for file in sorted_entries(&class_dir)?.into_iter().filter(|p| p.is_file()) {
            let decoded = std::fs::read(&file)
                .map_err(|e| Error::io(&file, e))
                .and_then(|bytes| decode_pnm(&bytes, &file))
                .and_then(|img| match channels {
                    Some(c) => img.to_channels(c),
                    None => Ok(img),
                });
            match decoded {
                Ok(image) => out.images.push(LabeledImage {
                    image,
                    label: label.clone(),
                    source: file.display().to_string(),
                }),
                Err(e) => {
                    log::warn!("skipping {}: {e}", file.display());
                    out.failures.push((file, e.to_string()));
                }
            }
        }
    }
    Ok(out)
}
