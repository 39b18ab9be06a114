//! Two-dimensional views of signature sets: PCA followed by exact t-SNE.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::csv_field;
use crate::error::{ensure, Error, Result};
use crate::path_signature::SigFeatures;
use crate::seeds;

/// Mean-centred projection onto the leading principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k` orthonormal directions, each of the input dimension.
    pub components: Vec<Vec<f64>>,
    /// Singular values of the centred data, descending.
    pub singular_values: Vec<f64>,
}

fn check_rows(points: &[Vec<f64>]) -> Result<usize> {
    ensure!(!points.is_empty(), "no points");
    let m = points[0].len();
    ensure!(m > 0, "points have zero dimension");
    ensure!(points.iter().all(|p| p.len() == m), "points differ in dimension");
    ensure!(
        points.iter().flatten().all(|v| v.is_finite()),
        "points must be finite"
    );
    Ok(m)
}

impl Pca {
    /// Fits `k <= min(n, dim)` components by SVD of the centred data. Each
    /// direction's largest-magnitude loading is made positive.
    pub fn fit(points: &[Vec<f64>], k: usize) -> Result<Self> {
        let m = check_rows(points)?;
        let n = points.len();
        ensure!(
            k >= 1 && k <= n.min(m),
            "PCA target dimension {k} must be in 1..={} (samples {n}, features {m})",
            n.min(m)
        );
        let mut mean = vec![0.0; m];
        for p in points {
            for (a, v) in mean.iter_mut().zip(p) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= n as f64);
        let centred = DMatrix::from_fn(n, m, |r, c| points[r][c] - mean[c]);

        // Work on whichever side is smaller: directions are rows of V^T.
        let (values, directions) = if n >= m {
            let svd = centred.svd(false, true);
            let vt = svd.v_t.expect("requested V^T");
            (svd.singular_values, vt)
        } else {
            let svd = centred.transpose().svd(true, false);
            let u = svd.u.expect("requested U");
            (svd.singular_values, u.transpose())
        };
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

        let mut components = Vec::with_capacity(k);
        let mut singular_values = Vec::with_capacity(k);
        for &i in order.iter().take(k) {
            let mut dir: Vec<f64> = directions.row(i).iter().copied().collect();
            let lead = dir
                .iter()
                .copied()
                .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if lead < 0.0 {
                dir.iter_mut().for_each(|v| *v = -*v);
            }
            components.push(dir);
            singular_values.push(values[i]);
        }
        ensure!(
            components.len() == k,
            "only {} principal directions available, {k} requested",
            components.len()
        );
        Ok(Self {
            mean,
            components,
            singular_values,
        })
    }

    pub fn transform(&self, point: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(point).zip(&self.mean).map(|((w, x), m)| w * (x - m)).sum())
            .collect()
    }

    pub fn inverse_transform(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, z) in self.components.iter().zip(coords) {
            for (o, w) in out.iter_mut().zip(c) {
                *o += z * w;
            }
        }
        out
    }
}

/// Projects feature vectors onto their top `k` principal directions.
pub fn pca_reduce(features: &[SigFeatures], k: usize) -> Result<Vec<Vec<f64>>> {
    let points: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
    let pca = Pca::fit(&points, k)?;
    Ok(points.iter().map(|p| pca.transform(p)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            seed: 0,
        }
    }
}

const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const MOMENTUM_SWITCH: usize = 250;
const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 50;
const KL_EVERY: usize = 50;
const INIT_SIGMA: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Tsne {
    pub coords: Vec<[f64; 2]>,
    /// `(iteration, KL(P || Q))`, starting at the initial layout.
    pub kl_trace: Vec<(usize, f64)>,
}

fn squared_distances(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect()
        })
        .collect();
    rows.concat()
}

/// Conditional affinities `p_{j|i}` for one row, bandwidth found by
/// bisection on the precision so the entropy matches `ln(perplexity)`.
fn row_affinities(d: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let dmin = d
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    let mut beta = 1.0;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut p = vec![0.0; d.len()];
    for _ in 0..MAX_BISECTIONS {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (j, (pj, &dj)) in p.iter_mut().zip(d).enumerate() {
            *pj = if j == i { 0.0 } else { (-(dj - dmin) * beta).exp() };
            sum += *pj;
            weighted += *pj * (dj - dmin);
        }
        // H = ln(sum) + beta * E[d - dmin]
        let entropy = sum.ln() + beta * weighted / sum;
        p.iter_mut().for_each(|v| *v /= sum);
        let diff = entropy - target;
        if diff.abs() < ENTROPY_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
        }
    }
    p
}

/// Symmetrised joint affinities `(p_{j|i} + p_{i|j}) / 2n`, row-major.
fn joint_affinities(points: &[Vec<f64>], perplexity: f64) -> Vec<f64> {
    let n = points.len();
    let d = squared_distances(points);
    let cond: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| row_affinities(&d[i * n..(i + 1) * n], i, perplexity))
        .collect();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    p
}

fn student_kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            sum += 2.0 * v;
        }
    }
    (num, sum)
}

fn kl_divergence(p: &[f64], num: &[f64], sum: f64, n: usize) -> f64 {
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (num[i * n + j] / sum).max(1e-12);
                let pij = p[i * n + j];
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

/// Exact O(n^2) t-SNE. The gradient loop is sequential, so a seed fixes the
/// output bit for bit.
pub fn tsne_exact(points: &[Vec<f64>], cfg: &TsneConfig) -> Result<Tsne> {
    check_rows(points)?;
    let n = points.len();
    ensure!(n >= 5, "t-SNE needs at least 5 points, got {n}");
    ensure!(
        cfg.perplexity > 0.0 && cfg.perplexity < n as f64 / 3.0,
        "perplexity {} must be in (0, n/3) = (0, {:.3})",
        cfg.perplexity,
        n as f64 / 3.0
    );
    ensure!(cfg.iterations >= 1, "t-SNE needs at least one iteration");
    ensure!(
        cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0,
        "learning rate must be positive"
    );
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::Contract(format!(
            "all {n} input points are identical; t-SNE affinities are undefined"
        )));
    }

    let p = joint_affinities(points, cfg.perplexity);
    let mut rng = seeds::rng(cfg.seed);
    let normal = Normal::new(0.0, INIT_SIGMA).expect("valid sigma");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = Vec::new();

    for iter in 0..cfg.iterations {
        let (num, sum) = student_kernel(&y);
        if iter % KL_EVERY == 0 {
            kl_trace.push((iter, kl_divergence(&p, &num, sum, n)));
        }
        let exaggeration = if iter < EXAGGERATION_ITERS { EXAGGERATION } else { 1.0 };
        let momentum = if iter < MOMENTUM_SWITCH { 0.5 } else { 0.8 };
        for i in 0..n {
            let mut grad = [0.0f64; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num[i * n + j];
                let coeff = 4.0 * (exaggeration * p[i * n + j] - w / sum) * w;
                grad[0] += coeff * (y[i][0] - y[j][0]);
                grad[1] += coeff * (y[i][1] - y[j][1]);
            }
            for a in 0..2 {
                gains[i][a] = if (grad[a] > 0.0) != (update[i][a] > 0.0) {
                    gains[i][a] + 0.2
                } else {
                    (gains[i][a] * 0.8).max(0.01)
                };
                update[i][a] = momentum * update[i][a] - cfg.learning_rate * gains[i][a] * grad[a];
            }
        }
        for (yi, u) in y.iter_mut().zip(&update) {
            yi[0] += u[0];
            yi[1] += u[1];
        }
        let (mx, my) = y.iter().fold((0.0, 0.0), |(a, b), v| (a + v[0], b + v[1]));
        for yi in &mut y {
            yi[0] -= mx / n as f64;
            yi[1] -= my / n as f64;
        }
    }
    let (num, sum) = student_kernel(&y);
    kl_trace.push((cfg.iterations, kl_divergence(&p, &num, sum, n)));
    ensure!(
        y.iter().all(|v| v[0].is_finite() && v[1].is_finite()),
        "t-SNE diverged; lower the learning rate"
    );
    Ok(Tsne { coords: y, kl_trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingResult {
    pub coords: Vec<[f64; 2]>,
    pub labels: Vec<String>,
    pub kl_trace: Vec<(usize, f64)>,
}

impl EmbeddingResult {
    /// CSV with header `x,y,label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,label\n");
        for (c, l) in self.coords.iter().zip(&self.labels) {
            writeln!(out, "{:?},{:?},{}", c[0], c[1], csv_field(l)).expect("writing to a String");
        }
        out
    }
}

/// Default PCA target dimension: `min(50, n - 1, feature length)`.
pub fn default_pca_dim(n: usize, len: usize) -> usize {
    50.min(n.saturating_sub(1)).min(len).max(1)
}

/// PCA to `pca_dim` (default [`default_pca_dim`]) then t-SNE.
pub fn embed(
    features: &[SigFeatures],
    labels: &[String],
    pca_dim: Option<usize>,
    cfg: &TsneConfig,
) -> Result<EmbeddingResult> {
    ensure!(features.len() == labels.len(), "feature and label counts differ");
    ensure!(!features.is_empty(), "nothing to embed");
    let k = pca_dim.unwrap_or_else(|| default_pca_dim(features.len(), features[0].len()));
    let reduced = pca_reduce(features, k)?;
    let t = tsne_exact(&reduced, cfg)?;
    Ok(EmbeddingResult {
        coords: t.coords,
        labels: labels.to_vec(),
        kl_trace: t.kl_trace,
    })
}
