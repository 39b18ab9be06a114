//! Streams, image-to-stream conventions, and truncated signatures.
//!
//! The signature of a stream `x_1..x_n` is the Chen product
//! `exp(x_2 - x_1) (x) exp(x_3 - x_2) (x) ... (x) exp(x_n - x_{n-1})`,
//! computed segment by segment and folded left to right.
//! [`signature_oracle`] evaluates the same coefficients directly as iterated
//! integrals by quadrature and exists to cross-check the fast path.

use serde::{Deserialize, Serialize};

use crate::data_io::Image;
use crate::error::{ensure, Result};
use crate::tensor_algebra::{feature_len, TruncatedTensor};

/// Ordered points in `R^dim`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    dim: usize,
    data: Vec<f64>,
}

impl Stream {
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(dim >= 1, "stream dimension must be positive");
        ensure!(
            data.len() % dim == 0,
            "flat buffer of {} values is not a whole number of {dim}-d points",
            data.len()
        );
        ensure!(
            data.len() / dim >= 2,
            "stream needs at least 2 points, got {}",
            data.len() / dim
        );
        ensure!(data.iter().all(|v| v.is_finite()), "stream contains a non-finite coordinate");
        Ok(Self { dim, data })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        ensure!(!points.is_empty(), "stream needs at least 2 points, got 0");
        let dim = points[0].as_ref().len();
        ensure!(
            points.iter().all(|p| p.as_ref().len() == dim),
            "all stream points must share one dimension"
        );
        Self::from_flat(dim, points.iter().flat_map(|p| p.as_ref().iter().copied()).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Successive differences `x_{i+1} - x_i`.
    pub fn increments(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.data
            .chunks_exact(self.dim)
            .zip(self.data.chunks_exact(self.dim).skip(1))
            .map(|(a, b)| b.iter().zip(a).map(|(y, x)| y - x).collect())
    }

    /// Points in reverse order.
    pub fn reversed(&self) -> Self {
        let data = self.data.chunks_exact(self.dim).rev().flatten().copied().collect();
        Self { dim: self.dim, data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamLayout {
    /// One point per pixel in row-major scan order; `dim` = channel count.
    #[default]
    PixelsAsSteps,
    /// One point per image row, the row's pixels flattened; `dim` = width * channels.
    RowsAsSteps,
}

/// How an `H x W x C` image becomes a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamConvention {
    pub layout: StreamLayout,
    /// Prepend a zero vector so the signature sees absolute intensity.
    pub basepoint: bool,
}

impl Default for StreamConvention {
    fn default() -> Self {
        Self {
            layout: StreamLayout::PixelsAsSteps,
            basepoint: true,
        }
    }
}

impl StreamConvention {
    pub fn new(layout: StreamLayout, basepoint: bool) -> Self {
        Self { layout, basepoint }
    }

    /// `(points, dim)` of the stream produced for an image of the given shape.
    pub fn stream_shape(&self, height: usize, width: usize, channels: usize) -> (usize, usize) {
        let extra = usize::from(self.basepoint);
        match self.layout {
            StreamLayout::PixelsAsSteps => (height * width + extra, channels),
            StreamLayout::RowsAsSteps => (height + extra, width * channels),
        }
    }
}

pub fn image_to_stream(image: &Image, conv: StreamConvention) -> Result<Stream> {
    let (_, dim) = conv.stream_shape(image.height(), image.width(), image.channels());
    let mut data = Vec::with_capacity(image.data().len() + dim);
    if conv.basepoint {
        data.extend(std::iter::repeat_n(0.0, dim));
    }
    // HWC row-major storage already matches both layouts' scan order.
    data.extend_from_slice(image.data());
    Stream::from_flat(dim, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigKind {
    #[default]
    Signature,
    LogSignature,
}

/// Signature or log-signature coefficients of levels `1..=order`, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigFeatures {
    pub dim: usize,
    pub order: usize,
    pub kind: SigKind,
    pub values: Vec<f64>,
}

impl SigFeatures {
    pub fn new(dim: usize, order: usize, kind: SigKind, values: Vec<f64>) -> Result<Self> {
        ensure!(
            values.len() == feature_len(dim, order),
            "feature vector has {} values, expected {} for d={dim}, N={order}",
            values.len(),
            feature_len(dim, order)
        );
        ensure!(values.iter().all(|v| v.is_finite()), "feature vector contains a non-finite value");
        Ok(Self {
            dim,
            order,
            kind,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.dim == other.dim && self.order == other.order && self.kind == other.kind
    }

    /// Reassembles the truncated tensor (level 0 is 1 for signatures, 0 for log-signatures).
    pub fn to_tensor(&self) -> Result<TruncatedTensor> {
        let scalar = match self.kind {
            SigKind::Signature => 1.0,
            SigKind::LogSignature => 0.0,
        };
        TruncatedTensor::from_flat(self.dim, self.order, scalar, &self.values)
    }
}

/// Full signature tensor (level 0 included) via Chen's identity.
pub fn signature_tensor(stream: &Stream, order: usize) -> Result<TruncatedTensor> {
    ensure!(order >= 1, "signature order must be >= 1");
    let mut acc = TruncatedTensor::identity(stream.dim(), order);
    for dx in stream.increments() {
        let step = TruncatedTensor::from_vector(&dx, order)?.exp()?;
        acc = acc.product(&step)?;
    }
    Ok(acc)
}

pub fn signature(stream: &Stream, order: usize) -> Result<SigFeatures> {
    let sig = signature_tensor(stream, order)?;
    SigFeatures::new(stream.dim(), order, SigKind::Signature, sig.flatten())
}

pub fn log_signature(stream: &Stream, order: usize) -> Result<SigFeatures> {
    let log = signature_tensor(stream, order)?.log()?;
    SigFeatures::new(stream.dim(), order, SigKind::LogSignature, log.flatten())
}

pub fn features(stream: &Stream, order: usize, kind: SigKind) -> Result<SigFeatures> {
    match kind {
        SigKind::Signature => signature(stream, order),
        SigKind::LogSignature => log_signature(stream, order),
    }
}

/// Composite Simpson panels per path segment at every integration level.
pub const ORACLE_PANELS: usize = 1 << 10;

/// Slow reference signature: every coordinate iterated integral is evaluated
/// by nested cumulative Simpson quadrature along the piecewise-linear
/// interpolation of the stream. Each segment is integrated over its own
/// grid of [`ORACLE_PANELS`] panels so the derivative is smooth on every panel.
pub fn signature_oracle(stream: &Stream, order: usize) -> Result<SigFeatures> {
    ensure!(order >= 1, "signature order must be >= 1");
    let d = stream.dim();
    let increments: Vec<Vec<f64>> = stream.increments().collect();
    let segments = increments.len();
    let m = ORACLE_PANELS;
    let nodes = segments * m + 1;
    let h = 1.0 / m as f64;

    // Given F_{k-1} sampled at all nodes, returns F_k(t) = int_0^t F_{k-1} dx_c.
    let integrate = |prev: &[f64], c: usize| -> Vec<f64> {
        let mut out = vec![0.0; nodes];
        for s in 0..segments {
            let dx = increments[s][c];
            let base = s * m;
            for p in (0..m).step_by(2) {
                let j = base + p;
                let (f0, f1, f2) = (prev[j] * dx, prev[j + 1] * dx, prev[j + 2] * dx);
                // Half-panel rule (exact for quadratics) for the odd node,
                // Simpson (exact for cubics) for the even node.
                out[j + 1] = out[j] + h / 12.0 * (5.0 * f0 + 8.0 * f1 - f2);
                out[j + 2] = out[j] + h / 3.0 * (f0 + 4.0 * f1 + f2);
            }
        }
        out
    };

    let mut values = Vec::with_capacity(feature_len(d, order));
    // Depth-first over words, sharing prefix integrals; emitted level by level.
    let mut levels: Vec<Vec<f64>> = vec![Vec::new(); order + 1];
    fn walk(
        prefix: &[f64],
        word_len: usize,
        order: usize,
        d: usize,
        levels: &mut [Vec<f64>],
        integrate: &dyn Fn(&[f64], usize) -> Vec<f64>,
    ) {
        for c in 0..d {
            let next = integrate(prefix, c);
            levels[word_len + 1].push(*next.last().expect("non-empty grid"));
            if word_len + 1 < order {
                walk(&next, word_len + 1, order, d, levels, integrate);
            }
        }
    }
    let ones = vec![1.0; nodes];
    walk(&ones, 0, order, d, &mut levels, &integrate);
    for level in &levels[1..] {
        values.extend_from_slice(level);
    }
    SigFeatures::new(d, order, SigKind::Signature, values)
}
