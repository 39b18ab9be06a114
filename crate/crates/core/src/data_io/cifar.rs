//! CIFAR-10 binary batches: 3073-byte records, one label byte followed by
//! 1024 red, 1024 green and 1024 blue samples.

use std::path::Path;

use super::{Image, LabeledImage};
use crate::error::{Error, Result};

const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
const RECORD: usize = 1 + 3 * PLANE;

pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

pub(crate) fn parse_batch(bytes: &[u8], path: &Path) -> Result<Vec<LabeledImage>> {
    if bytes.len() % RECORD != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "size {} is not a multiple of the {RECORD}-byte record length",
                bytes.len()
            ),
        });
    }
    bytes
        .chunks_exact(RECORD)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0] as usize;
            let name = CIFAR10_CLASSES.get(label).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("record {i} has label byte {label}, expected 0..9"),
            })?;
            let planes = &rec[1..];
            let mut data = Vec::with_capacity(3 * PLANE);
            for p in 0..PLANE {
                for c in 0..3 {
                    data.push(f64::from(planes[c * PLANE + p]) / 255.0);
                }
            }
            Ok(LabeledImage {
                image: Image::new(SIDE, SIDE, 3, data)?,
                label: (*name).to_string(),
                source: format!("{}#{i}", path.display()),
            })
        })
        .collect()
}

/// Loads and concatenates CIFAR-10 binary batch files in the given order.
pub fn load_cifar10<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<LabeledImage>> {
    let mut out = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        out.extend(parse_batch(&bytes, p)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, seed: u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..3 * PLANE).map(|i| (i as u8).wrapping_mul(7).wrapping_add(seed)));
        r
    }

    #[test]
    fn single_record_roundtrip() {
        let rec = record(3, 11);
        let set = parse_batch(&rec, Path::new("x.bin")).unwrap();
        assert_eq!(set.len(), 1);
        let img = &set[0].image;
        assert_eq!((img.height(), img.width(), img.channels()), (32, 32, 3));
        assert_eq!(set[0].label, "cat");
        // Pixel (row 1, col 2) comes from index 34 in each colour plane.
        let px = img.pixel(1, 2);
        for (c, v) in px.iter().enumerate() {
            assert_eq!(*v, f64::from(rec[1 + c * PLANE + 34]) / 255.0);
        }
        // Planar to interleaved and back.
        let bytes = img.to_u8();
        for c in 0..3 {
            for p in 0..PLANE {
                assert_eq!(bytes[p * 3 + c], rec[1 + c * PLANE + p]);
            }
        }
    }

    #[test]
    fn rejects_bad_size_and_label() {
        let mut rec = record(1, 0);
        rec.push(0);
        assert!(matches!(parse_batch(&rec, Path::new("x")), Err(Error::Format { .. })));
        let bad = record(255, 0);
        let err = parse_batch(&bad, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("label byte 255"));
    }

    #[test]
    fn loads_multiple_batches_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        std::fs::write(&a, [record(0, 1), record(9, 2)].concat()).unwrap();
        std::fs::write(&b, record(5, 3)).unwrap();
        let set = load_cifar10(&[a, b]).unwrap();
        let labels: Vec<_> = set.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["airplane", "truck", "dog"]);
    }
}
