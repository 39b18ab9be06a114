//! Per-class scale factors: the averaged element-wise ratio in closed form,
//! and a projected subgradient method on the scalarized MAE objective
//! `f(lambda) - gamma * g(lambda)`, where `f` pulls scaled validation
//! features toward their own representative and `g` pushes them away from
//! the other classes' representatives.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::path_signature::SigFeatures;
use crate::scoring::ScaleFactors;
use crate::seeds;

#[derive(Debug, Clone)]
pub struct CalibrationClass {
    pub label: String,
    pub representative: SigFeatures,
    pub validation: Vec<SigFeatures>,
}

/// Representatives and validation features for every class, all sharing one layout.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    classes: Vec<CalibrationClass>,
}

impl CalibrationSet {
    pub fn new(classes: Vec<CalibrationClass>) -> Result<Self> {
        ensure!(!classes.is_empty(), "calibration set has no classes");
        let layout = &classes[0].representative;
        for c in &classes {
            ensure!(
                !c.validation.is_empty(),
                "class {:?} has no validation instances",
                c.label
            );
            ensure!(
                c.representative.same_layout(layout) && c.representative.len() == layout.len(),
                "class {:?} representative layout differs",
                c.label
            );
            ensure!(
                c.validation.iter().all(|v| v.same_layout(layout) && v.len() == layout.len()),
                "class {:?} has validation features with a different layout",
                c.label
            );
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[CalibrationClass] {
        &self.classes
    }

    pub fn feature_len(&self) -> usize {
        self.classes[0].representative.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioDirection {
    /// `mean_v(ybar / x_v)`: solves `lambda * x = ybar`.
    #[default]
    RepresentativeOverInstance,
    /// `mean_v(x_v / ybar)`, the transposed reading.
    InstanceOverRepresentative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClosedFormOptions {
    /// Divisors smaller than this in magnitude are replaced by `+-epsilon`.
    pub epsilon: f64,
    pub direction: RatioDirection,
}

impl Default for ClosedFormOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            direction: RatioDirection::RepresentativeOverInstance,
        }
    }
}

/// `num / den` with `|den| < eps` replaced by `+-eps`. When both sides are
/// below `eps` the component carries no signal and gets the neutral factor 1.
fn guarded_div(num: f64, den: f64, eps: f64) -> f64 {
    if den.abs() < eps && num.abs() < eps {
        1.0
    } else if den.abs() < eps {
        num / if den < 0.0 { -eps } else { eps }
    } else {
        num / den
    }
}

/// Averaged element-wise ratio for one class.
pub fn closed_form_class(class: &CalibrationClass, opts: &ClosedFormOptions) -> Result<ScaleFactors> {
    ensure!(
        opts.epsilon.is_finite() && opts.epsilon > 0.0,
        "epsilon must be positive, got {}",
        opts.epsilon
    );
    ensure!(!class.validation.is_empty(), "class {:?} has no validation instances", class.label);
    let ybar = &class.representative.values;
    let mut acc = vec![0.0; ybar.len()];
    for x in &class.validation {
        ensure!(x.len() == ybar.len(), "validation feature length mismatch");
        for ((a, &y), &v) in acc.iter_mut().zip(ybar).zip(&x.values) {
            *a += match opts.direction {
                RatioDirection::RepresentativeOverInstance => guarded_div(y, v, opts.epsilon),
                RatioDirection::InstanceOverRepresentative => guarded_div(v, y, opts.epsilon),
            };
        }
    }
    let count = class.validation.len() as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    ScaleFactors::mask(acc)
}

/// Closed-form scale factors, one per class in set order.
pub fn closed_form_lambda(cal: &CalibrationSet, opts: &ClosedFormOptions) -> Result<Vec<ScaleFactors>> {
    cal.classes.iter().map(|c| closed_form_class(c, opts)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerInit {
    #[default]
    ClosedForm,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Weight of the separation term.
    pub gamma: f64,
    /// Infinity-norm bound on lambda; `None` leaves it unconstrained.
    pub bound: Option<f64>,
    pub iterations: usize,
    /// Initial step; iteration `t` (from 1) uses `step / sqrt(t)`.
    pub step: f64,
    /// Validation instances sampled per iteration; `None` uses all of them.
    pub batch: Option<usize>,
    pub seed: u64,
    pub init: OptimizerInit,
    pub closed_form: ClosedFormOptions,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            bound: Some(1.0),
            iterations: 500,
            step: 1.0,
            batch: None,
            seed: 0,
            init: OptimizerInit::ClosedForm,
            closed_form: ClosedFormOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub lambda: ScaleFactors,
    /// Scalarized objective at the starting point.
    pub initial_objective: f64,
    /// Scalarized objective of the returned (best seen) iterate.
    pub final_objective: f64,
    pub iterations_run: usize,
}

/// `(f, g)` for class `z`: summed MAE of the scaled validation features
/// against their own representative, and against every other representative.
pub fn objective_terms(cal: &CalibrationSet, z: usize, lambda: &[f64]) -> Result<(f64, f64)> {
    ensure!(z < cal.classes.len(), "class index {z} out of range");
    ensure!(lambda.len() == cal.feature_len(), "lambda length mismatch");
    let (f, g, _) = evaluate(cal, z, lambda, 0.0, None);
    Ok((f, g))
}

/// Objective terms and, when `grad_gamma` is given, the subgradient of
/// `f - gamma g` (sign taken as 0 at kinks). `subset` restricts the
/// validation instances used for the subgradient; the objective is always full.
fn evaluate(
    cal: &CalibrationSet,
    z: usize,
    lambda: &[f64],
    gamma: f64,
    subset: Option<&[usize]>,
) -> (f64, f64, Vec<f64>) {
    let n = lambda.len();
    let inv_n = 1.0 / n as f64;
    let own = &cal.classes[z].representative.values;
    let validation = &cal.classes[z].validation;
    let mut f = 0.0;
    let mut g = 0.0;
    let mut grad = vec![0.0; n];
    let mut in_subset = vec![subset.is_none(); validation.len()];
    if let Some(s) = subset {
        for &i in s {
            in_subset[i] = true;
        }
    }
    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    for (vi, x) in validation.iter().enumerate() {
        let use_grad = in_subset[vi];
        for c in 0..n {
            let sx = lambda[c] * x.values[c];
            let r = sx - own[c];
            f += r.abs() * inv_n;
            let mut s = sign(r);
            for (l, other) in cal.classes.iter().enumerate() {
                if l == z {
                    continue;
                }
                let q = sx - other.representative.values[c];
                g += q.abs() * inv_n;
                s -= gamma * sign(q);
            }
            if use_grad {
                grad[c] += s * x.values[c] * inv_n;
            }
        }
    }
    (f, g, grad)
}

fn project(lambda: &mut [f64], bound: Option<f64>) {
    if let Some(b) = bound {
        lambda.iter_mut().for_each(|v| *v = v.clamp(-b, b));
    }
}

fn optimize_class(cal: &CalibrationSet, z: usize, cfg: &OptimizerConfig) -> Result<OptimizeOutcome> {
    let class = &cal.classes[z];
    let n = cal.feature_len();
    let mut lambda = match cfg.init {
        OptimizerInit::ClosedForm => match closed_form_class(class, &cfg.closed_form)? {
            ScaleFactors::Mask(v) => v,
            ScaleFactors::Identity => vec![1.0; n],
        },
        OptimizerInit::Ones => vec![1.0; n],
    };
    project(&mut lambda, cfg.bound);

    let scalarize = |(f, g): (f64, f64)| f - cfg.gamma * g;
    let check = |value: f64, iteration: usize| -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite {
                class: class.label.clone(),
                iteration,
                objective: value,
            })
        }
    };

    let (f0, g0, _) = evaluate(cal, z, &lambda, cfg.gamma, None);
    let initial = check(scalarize((f0, g0)), 0)?;
    let mut best = lambda.clone();
    let mut best_value = initial;

    // The uncalibrated all-ones mask is always a candidate.
    let mut ones = vec![1.0; n];
    project(&mut ones, cfg.bound);
    let (fo, go, _) = evaluate(cal, z, &ones, cfg.gamma, None);
    let ones_value = check(scalarize((fo, go)), 0)?;
    if ones_value < best_value {
        best_value = ones_value;
        best = ones;
    }

    let mut rng = seeds::rng(seeds::indexed(cfg.seed, z as u64));
    let v_count = class.validation.len();
    let mut iterations_run = 0;
    let mut subset_buf: Vec<usize>;
    for t in 1..=cfg.iterations {
        let subset = match cfg.batch {
            Some(b) if b < v_count => {
                subset_buf = index::sample(&mut rng, v_count, b.max(1)).into_vec();
                subset_buf.sort_unstable();
                Some(subset_buf.as_slice())
            }
            _ => None,
        };
        let (_, _, grad) = evaluate(cal, z, &lambda, cfg.gamma, subset);
        iterations_run = t;
        if grad.iter().all(|&v| v == 0.0) {
            break;
        }
        let alpha = cfg.step / (t as f64).sqrt();
        for (l, gv) in lambda.iter_mut().zip(&grad) {
            *l -= alpha * gv;
        }
        project(&mut lambda, cfg.bound);
        let (f, g, _) = evaluate(cal, z, &lambda, cfg.gamma, None);
        let value = check(scalarize((f, g)), t)?;
        if value < best_value {
            best_value = value;
            best.copy_from_slice(&lambda);
        }
    }

    Ok(OptimizeOutcome {
        lambda: ScaleFactors::mask(best)?,
        initial_objective: initial,
        final_objective: best_value,
        iterations_run,
    })
}

/// Projected subgradient descent on `f - gamma g` for every class
/// independently. Returns the best iterate seen per class, in set order.
pub fn optimize_lambda(cal: &CalibrationSet, cfg: &OptimizerConfig) -> Result<Vec<OptimizeOutcome>> {
    ensure!(cfg.gamma.is_finite() && cfg.gamma >= 0.0, "gamma must be finite and >= 0");
    ensure!(
        cfg.bound.is_none_or(|b| b.is_finite() && b > 0.0),
        "bound must be finite and positive"
    );
    ensure!(cfg.iterations >= 1, "optimizer needs at least one iteration");
    ensure!(cfg.step.is_finite() && cfg.step > 0.0, "step must be positive");
    (0..cal.classes.len())
        .into_par_iter()
        .map(|z| optimize_class(cal, z, cfg))
        .collect()
}
