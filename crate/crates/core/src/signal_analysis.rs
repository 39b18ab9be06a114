//! Savitzky-Golay smoothing of absolute class representatives.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassModel;
use crate::error::{ensure, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    pub label: String,
    /// `|representative|`, component by component.
    pub raw_abs: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub window: usize,
    pub polyorder: usize,
}

impl SpectrumSeries {
    /// CSV with header `index,raw_abs,smoothed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,raw_abs,smoothed\n");
        for (i, (r, s)) in self.raw_abs.iter().zip(&self.smoothed).enumerate() {
            writeln!(out, "{i},{r:?},{s:?}").expect("writing to a String");
        }
        out
    }
}

fn check_window(window: usize, polyorder: usize) -> Result<()> {
    ensure!(window % 2 == 1, "Savitzky-Golay window must be odd, got {window}");
    ensure!(
        polyorder < window,
        "polyorder {polyorder} must be smaller than the window {window}"
    );
    Ok(())
}

/// Central-point least-squares smoothing kernel of length `window`.
///
/// Fits a degree-`polyorder` polynomial to positions `-h..=h` and reads off
/// its value at 0. Positions are scaled by `1/h` so the normal equations
/// stay well conditioned for long windows.
pub fn savgol_coefficients(window: usize, polyorder: usize) -> Result<Vec<f64>> {
    check_window(window, polyorder)?;
    if window == 1 {
        return Ok(vec![1.0]);
    }
    let h = (window - 1) / 2;
    let cols = polyorder + 1;
    let a = DMatrix::from_fn(window, cols, |r, c| {
        let t = (r as f64 - h as f64) / h as f64;
        t.powi(c as i32)
    });
    let ata = a.transpose() * &a;
    // The value at t = 0 is the constant coefficient: e_0^T (A^T A)^-1 A^T.
    let mut e0 = DVector::zeros(cols);
    e0[0] = 1.0;
    let chol = ata
        .cholesky()
        .ok_or_else(|| crate::Error::Contract("singular Savitzky-Golay normal equations".into()))?;
    let w = chol.solve(&e0);
    let kernel = &a * w;
    Ok(kernel.iter().copied().collect())
}

/// Reflects an out-of-range index back into `0..n` (mirror without edge repeat).
fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut k = i.rem_euclid(period);
    if k >= n as isize {
        k = period - k;
    }
    k as usize
}

/// Applies the smoothing kernel with mirror padding; the length is preserved.
pub fn savgol_filter(series: &[f64], window: usize, polyorder: usize) -> Result<Vec<f64>> {
    ensure!(!series.is_empty(), "cannot filter an empty series");
    ensure!(series.iter().all(|v| v.is_finite()), "series must be finite");
    let kernel = savgol_coefficients(window, polyorder)?;
    let h = (window / 2) as isize;
    let n = series.len();
    Ok((0..n as isize)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, c)| c * series[mirror(i + k as isize - h, n)])
                .sum()
        })
        .collect())
}

/// Largest usable `(window, polyorder)` for a series of length `len`.
pub fn clamp_window(window: usize, polyorder: usize, len: usize) -> (usize, usize) {
    if window <= len || len == 0 {
        return (window, polyorder);
    }
    let w = if len % 2 == 1 { len } else { len - 1 };
    (w, polyorder.min(w - 1))
}

/// Smoothed `|representative|` per class. Windows longer than the feature
/// length are clamped to the largest odd value that fits, with a warning.
pub fn export_spectrum(model: &ClassModel, window: usize, polyorder: usize) -> Result<Vec<SpectrumSeries>> {
    check_window(window, polyorder)?;
    let len = model.feature_len();
    let (w, p) = clamp_window(window, polyorder, len);
    if (w, p) != (window, polyorder) {
        log::warn!("window {window} exceeds feature length {len}; clamped to window {w}, polyorder {p}");
    }
    model
        .classes
        .par_iter()
        .map(|c| {
            let raw_abs: Vec<f64> = c.representative.values.iter().map(|v| v.abs()).collect();
            let smoothed = savgol_filter(&raw_abs, w, p)?;
            Ok(SpectrumSeries {
                label: c.label.clone(),
                raw_abs,
                smoothed,
                window: w,
                polyorder: p,
            })
        })
        .collect()
}
