//! Dataset ingestion, procedural shapes, resizing and augmentation.

mod augment;
mod cifar;
mod idx;
mod pnm;
mod resize;
mod shapes;

pub use augment::{augment, AugmentSpec, Noise};
pub use cifar::{load_cifar10, CIFAR10_CLASSES};
pub use idx::load_mnist_idx;
pub use pnm::{decode_pnm, encode_pnm, load_image_dir, write_pnm, DirLoad};
pub use resize::resize;
pub use shapes::{gen_four_shapes, ShapeJitter, SHAPE_CLASSES};

use crate::error::{ensure, Result};

/// Pixels in `[0, 1]`, stored height x width x channels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(height >= 1 && width >= 1, "image must be non-empty, got {height}x{width}");
        ensure!(
            channels == 1 || channels == 3,
            "channel count must be 1 or 3, got {channels}"
        );
        ensure!(
            data.len() == height * width * channels,
            "pixel buffer has {} values, expected {}",
            data.len(),
            height * width * channels
        );
        ensure!(
            data.iter().all(|v| (0.0..=1.0).contains(v)),
            "pixel values must lie in [0, 1]"
        );
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image from 8-bit samples, scaling by 1/255.
    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Converts to the requested channel count. Grayscale is replicated to
    /// RGB; RGB is reduced to grayscale by Rec. 601 luma.
    pub fn to_channels(&self, channels: usize) -> Result<Self> {
        ensure!(
            channels == 1 || channels == 3,
            "channel count must be 1 or 3, got {channels}"
        );
        if channels == self.channels {
            return Ok(self.clone());
        }
        let data = if channels == 3 {
            self.data.iter().flat_map(|&v| [v, v, v]).collect()
        } else {
            self.data
                .chunks_exact(3)
                .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
                .collect()
        };
        Self::new(self.height, self.width, channels, data)
    }

    /// Quantizes to 8-bit samples with rounding.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub(crate) fn map_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: String,
    /// Where the sample came from, e.g. a file path plus record index.
    pub source: String,
}
