//! Element-wise mean representatives and the RMSE / MAE score functions,
//! optionally with multiplicative scale factors on either argument.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::path_signature::SigFeatures;

/// Multiplicative mask applied component-wise before scoring.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleFactors {
    #[default]
    Identity,
    Mask(Vec<f64>),
}

impl ScaleFactors {
    pub fn mask(values: Vec<f64>) -> Result<Self> {
        ensure!(values.iter().all(|v| v.is_finite()), "scale factors must be finite");
        Ok(ScaleFactors::Mask(values))
    }

    pub fn ones(n: usize) -> Self {
        ScaleFactors::Mask(vec![1.0; n])
    }

    /// Length of the mask, or `None` for the identity.
    pub fn len(&self) -> Option<usize> {
        match self {
            ScaleFactors::Identity => None,
            ScaleFactors::Mask(v) => Some(v.len()),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            ScaleFactors::Identity => true,
            ScaleFactors::Mask(v) => v.iter().all(|&x| x == 1.0),
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        match self {
            ScaleFactors::Identity => 1.0,
            ScaleFactors::Mask(v) => v[i],
        }
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if let Some(len) = self.len() {
            ensure!(len == n, "scale factor length {len} does not match feature length {n}");
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        Ok(x.iter().enumerate().map(|(i, v)| self.get(i) * v).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Rmse,
    Mae,
}

impl Metric {
    pub fn score(&self, x: &[f64], y: &[f64], lx: &ScaleFactors, ly: &ScaleFactors) -> Result<f64> {
        match self {
            Metric::Rmse => rmse(x, y, lx, ly),
            Metric::Mae => mae(x, y, lx, ly),
        }
    }
}

/// Component-wise arithmetic mean of feature vectors sharing one layout.
pub fn elementwise_mean(features: &[SigFeatures]) -> Result<SigFeatures> {
    ensure!(!features.is_empty(), "element-wise mean of an empty set");
    let first = &features[0];
    ensure!(
        features.iter().all(|f| f.same_layout(first) && f.len() == first.len()),
        "element-wise mean over features with differing dim/order/kind"
    );
    let mut sum = vec![0.0; first.len()];
    for f in features {
        for (s, v) in sum.iter_mut().zip(&f.values) {
            *s += v;
        }
    }
    let m = features.len() as f64;
    sum.iter_mut().for_each(|s| *s /= m);
    SigFeatures::new(first.dim, first.order, first.kind, sum)
}

fn scaled_diffs<'a>(
    x: &'a [f64],
    y: &'a [f64],
    lx: &'a ScaleFactors,
    ly: &'a ScaleFactors,
) -> Result<impl Iterator<Item = f64> + 'a> {
    ensure!(
        x.len() == y.len(),
        "score arguments differ in length: {} vs {}",
        x.len(),
        y.len()
    );
    ensure!(!x.is_empty(), "score of empty feature vectors");
    lx.check_len(x.len())?;
    ly.check_len(y.len())?;
    Ok(x.iter()
        .zip(y)
        .enumerate()
        .map(move |(i, (a, b))| ly.get(i) * b - lx.get(i) * a))
}

/// `sqrt(mean((ly*y - lx*x)^2))`.
pub fn rmse(x: &[f64], y: &[f64], lx: &ScaleFactors, ly: &ScaleFactors) -> Result<f64> {
    let n = x.len() as f64;
    Ok((scaled_diffs(x, y, lx, ly)?.map(|d| d * d).sum::<f64>() / n).sqrt())
}

/// `mean(|ly*y - lx*x|)`.
pub fn mae(x: &[f64], y: &[f64], lx: &ScaleFactors, ly: &ScaleFactors) -> Result<f64> {
    let n = x.len() as f64;
    Ok(scaled_diffs(x, y, lx, ly)?.map(f64::abs).sum::<f64>() / n)
}
