//! Nearest-representative classification with calibrated scale factors.
//!
//! A [`ClassModel`] holds one element-wise mean signature per class plus a
//! scale-factor mask per class and metric. Four evaluation protocols are
//! available:
//!
//! * `plain`: argmin over classes of `score(x, ybar_z)`;
//! * `fixed`: argmin of `score(lambda_z * x, ybar_z)`, each class using its own mask;
//! * `ova`: per-class accept thresholds learned on validation data;
//! * `oracle`: applies the *true* class's mask to every comparison. It needs
//!   the test label and is only meant for auditing label-leaking results.
//!
//! Ties always resolve to the lowest class index.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    closed_form_lambda, optimize_lambda, CalibrationClass, CalibrationSet, ClosedFormOptions,
    OptimizerConfig,
};
use crate::data_io::{augment, AugmentSpec, Image, LabeledImage};
use crate::error::{ensure, Error, Result};
use crate::path_signature::{self, image_to_stream, SigFeatures, SigKind, StreamConvention};
use crate::scoring::{elementwise_mean, Metric, ScaleFactors};
use crate::tensor_algebra::feature_len;

pub const MODEL_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_OVA_SLACK: f64 = 1.1;

/// Everything needed to turn an image into a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// `(height, width)` every image must have.
    pub image_size: (usize, usize),
    pub channels: usize,
    pub convention: StreamConvention,
    pub kind: SigKind,
    pub order: usize,
    /// Test-side augmentation; features become the mean over augmented copies.
    pub augmentation: Option<AugmentSpec>,
}

impl FeatureConfig {
    pub fn new(image_size: (usize, usize), channels: usize, order: usize) -> Self {
        Self {
            image_size,
            channels,
            convention: StreamConvention::default(),
            kind: SigKind::Signature,
            order,
            augmentation: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        ensure!(h >= 1 && w >= 1, "image size must be non-empty");
        ensure!(self.channels == 1 || self.channels == 3, "channels must be 1 or 3");
        ensure!(self.order >= 1, "signature order must be >= 1");
        if let Some(spec) = &self.augmentation {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn stream_dim(&self) -> usize {
        let (h, w) = self.image_size;
        self.convention.stream_shape(h, w, self.channels).1
    }

    pub fn feature_len(&self) -> usize {
        feature_len(self.stream_dim(), self.order)
    }

    /// Checks the size and converts channels (grayscale is replicated).
    pub fn prepare(&self, image: &Image) -> Result<Image> {
        ensure!(
            (image.height(), image.width()) == self.image_size,
            "image is {}x{}, model expects {}x{} (resize first)",
            image.height(),
            image.width(),
            self.image_size.0,
            self.image_size.1
        );
        image.to_channels(self.channels)
    }

    /// Features of one image, without augmentation.
    pub fn features(&self, image: &Image) -> Result<SigFeatures> {
        let prepared = self.prepare(image)?;
        let stream = image_to_stream(&prepared, self.convention)?;
        path_signature::features(&stream, self.order, self.kind)
    }

    /// Features of a test-side instance: the element-wise mean over
    /// augmented copies when augmentation is configured. `item` selects the
    /// augmentation sub-stream so results do not depend on scheduling.
    pub fn instance_features(&self, image: &Image, item: u64) -> Result<SigFeatures> {
        match &self.augmentation {
            None => self.features(image),
            Some(spec) => {
                let prepared = self.prepare(image)?;
                let copies = augment(&prepared, &spec.for_item(item))
                    .iter()
                    .map(|c| self.features(c))
                    .collect::<Result<Vec<_>>>()?;
                elementwise_mean(&copies)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub label: String,
    pub train_count: usize,
    pub representative: SigFeatures,
    pub lambda_rmse: ScaleFactors,
    pub lambda_mae: ScaleFactors,
    /// One-vs-all accept threshold for the model metric, set by calibration.
    pub ova_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub schema_version: u32,
    pub features: FeatureConfig,
    pub metric: Metric,
    pub classes: Vec<ClassEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Plain,
    Fixed,
    Ova,
    Oracle,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Plain, Protocol::Fixed, Protocol::Ova, Protocol::Oracle];

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Plain => "plain",
            Protocol::Fixed => "fixed",
            Protocol::Ova => "ova",
            Protocol::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol {s:?} (plain|fixed|ova|oracle)")))
    }
}

/// How scale factors are obtained from validation data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Calibration {
    None,
    ClosedForm(ClosedFormOptions),
    Optimize(OptimizerConfig),
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration::ClosedForm(ClosedFormOptions::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub label: String,
    /// Score per class, in model class order.
    pub scores: Vec<f64>,
    /// Runner-up decision score minus winning decision score.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub correct: bool,
    pub prediction: Prediction,
}

/// Index of the smallest value; the lowest index wins ties.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn margin_of(decision: &[f64], winner: usize) -> f64 {
    let runner_up = decision
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != winner)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    if runner_up.is_finite() {
        runner_up - decision[winner]
    } else {
        0.0
    }
}

/// Class labels in order of first appearance.
pub fn labels_in_order(samples: &[LabeledImage]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in samples {
        if !out.contains(&s.label) {
            out.push(s.label.clone());
        }
    }
    out
}

/// Fits per-class element-wise mean representatives, classes in order of
/// first appearance. Scale factors start as all-ones masks.
pub fn fit(train: &[LabeledImage], config: &FeatureConfig, metric: Metric) -> Result<ClassModel> {
    fit_classes(train, &labels_in_order(train), config, metric)
}

/// As [`fit`] with an explicit class list; every declared class needs at
/// least one training image and every image must belong to a declared class.
pub fn fit_classes(
    train: &[LabeledImage],
    classes: &[String],
    config: &FeatureConfig,
    metric: Metric,
) -> Result<ClassModel> {
    config.validate()?;
    ensure!(!classes.is_empty(), "no classes to fit");
    for s in train {
        ensure!(classes.contains(&s.label), "training label {:?} is not a declared class", s.label);
    }
    let features: Vec<SigFeatures> = train
        .par_iter()
        .map(|s| config.features(&s.image))
        .collect::<Result<_>>()?;
    let n = config.feature_len();
    let entries = classes
        .iter()
        .map(|label| {
            let own: Vec<SigFeatures> = train
                .iter()
                .zip(&features)
                .filter(|(s, _)| &s.label == label)
                .map(|(_, f)| f.clone())
                .collect();
            ensure!(!own.is_empty(), "class {label:?} has no training samples");
            Ok(ClassEntry {
                label: label.clone(),
                train_count: own.len(),
                representative: elementwise_mean(&own)?,
                lambda_rmse: ScaleFactors::ones(n),
                lambda_mae: ScaleFactors::ones(n),
                ova_threshold: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassModel {
        schema_version: MODEL_SCHEMA_VERSION,
        features: config.clone(),
        metric,
        classes: entries,
    })
}

/// Summary of one calibration pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    /// Scalarized optimizer objective per class `(initial, final)`, if optimized.
    pub objectives: Option<Vec<(f64, f64)>>,
    pub thresholds: Vec<f64>,
}

impl ClassModel {
    pub fn labels(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.label.clone()).collect()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.label == label)
    }

    pub fn feature_len(&self) -> usize {
        self.features.feature_len()
    }

    /// Scale factors for class `z` under the model metric.
    pub fn lambda(&self, z: usize) -> &ScaleFactors {
        match self.metric {
            Metric::Rmse => &self.classes[z].lambda_rmse,
            Metric::Mae => &self.classes[z].lambda_mae,
        }
    }

    pub fn set_lambda(&mut self, z: usize, metric: Metric, lambda: ScaleFactors) -> Result<()> {
        lambda.check_len(self.feature_len())?;
        match metric {
            Metric::Rmse => self.classes[z].lambda_rmse = lambda,
            Metric::Mae => self.classes[z].lambda_mae = lambda,
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Option<Vec<f64>> {
        self.classes.iter().map(|c| c.ova_threshold).collect()
    }

    /// Checks internal consistency (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.schema_version == MODEL_SCHEMA_VERSION,
            "unsupported model schema_version {} (expected {MODEL_SCHEMA_VERSION})",
            self.schema_version
        );
        self.features.validate()?;
        ensure!(!self.classes.is_empty(), "model has no classes");
        let n = self.feature_len();
        let dim = self.features.stream_dim();
        for c in &self.classes {
            let r = &c.representative;
            ensure!(
                r.dim == dim && r.order == self.features.order && r.kind == self.features.kind && r.len() == n,
                "class {:?} representative does not match the feature config",
                c.label
            );
            ensure!(r.values.iter().all(|v| v.is_finite()), "class {:?} representative is not finite", c.label);
            c.lambda_rmse.check_len(n)?;
            c.lambda_mae.check_len(n)?;
        }
        Ok(())
    }

    /// Features of a test-side instance (see [`FeatureConfig::instance_features`]).
    pub fn instance_features(&self, image: &Image, item: u64) -> Result<SigFeatures> {
        self.features.instance_features(image, item)
    }

    fn instance_features_batch(&self, samples: &[LabeledImage]) -> Result<Vec<SigFeatures>> {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| self.instance_features(&s.image, i as u64))
            .collect()
    }

    /// Builds the calibration set from labelled validation images.
    pub fn calibration_set(&self, validation: &[LabeledImage]) -> Result<CalibrationSet> {
        let feats = self.instance_features_batch(validation)?;
        self.calibration_set_from_features(validation, feats)
    }

    fn calibration_set_from_features(
        &self,
        validation: &[LabeledImage],
        feats: Vec<SigFeatures>,
    ) -> Result<CalibrationSet> {
        let mut per_class: Vec<Vec<SigFeatures>> = vec![Vec::new(); self.classes.len()];
        for (s, f) in validation.iter().zip(feats) {
            let z = self
                .class_index(&s.label)
                .ok_or_else(|| Error::contract(format!("validation label {:?} is not a model class", s.label)))?;
            per_class[z].push(f);
        }
        CalibrationSet::new(
            self.classes
                .iter()
                .zip(per_class)
                .map(|(c, v)| CalibrationClass {
                    label: c.label.clone(),
                    representative: c.representative.clone(),
                    validation: v,
                })
                .collect(),
        )
    }

    /// Computes scale factors from validation data, then one-vs-all
    /// thresholds `slack * max_v score(lambda_z * x_v, ybar_z)`. With
    /// [`Calibration::None`] masks stay all-ones but thresholds are still set.
    pub fn calibrate(
        &mut self,
        validation: &[LabeledImage],
        method: &Calibration,
        ova_slack: f64,
    ) -> Result<CalibrationReport> {
        ensure!(ova_slack.is_finite() && ova_slack > 0.0, "OVA slack must be positive");
        let cal = self.calibration_set(validation)?;
        let mut objectives = None;
        match method {
            Calibration::None => {
                let n = self.feature_len();
                for z in 0..self.classes.len() {
                    self.set_lambda(z, Metric::Rmse, ScaleFactors::ones(n))?;
                    self.set_lambda(z, Metric::Mae, ScaleFactors::ones(n))?;
                }
            }
            Calibration::ClosedForm(opts) => {
                for (z, lambda) in closed_form_lambda(&cal, opts)?.into_iter().enumerate() {
                    self.set_lambda(z, Metric::Rmse, lambda.clone())?;
                    self.set_lambda(z, Metric::Mae, lambda)?;
                }
            }
            Calibration::Optimize(cfg) => {
                let outcomes = optimize_lambda(&cal, cfg)?;
                objectives = Some(outcomes.iter().map(|o| (o.initial_objective, o.final_objective)).collect());
                for (z, o) in outcomes.into_iter().enumerate() {
                    self.set_lambda(z, Metric::Rmse, o.lambda.clone())?;
                    self.set_lambda(z, Metric::Mae, o.lambda)?;
                }
            }
        }
        let thresholds = self.fit_thresholds(&cal, ova_slack)?;
        Ok(CalibrationReport { objectives, thresholds })
    }

    fn fit_thresholds(&mut self, cal: &CalibrationSet, slack: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.classes.len());
        for (z, class) in cal.classes().iter().enumerate() {
            let ybar = &self.classes[z].representative.values;
            let mut worst = 0.0f64;
            for x in &class.validation {
                let s = self
                    .metric
                    .score(&x.values, ybar, self.lambda(z), &ScaleFactors::Identity)?;
                worst = worst.max(s);
            }
            let tau = slack * worst;
            self.classes[z].ova_threshold = Some(tau);
            out.push(tau);
        }
        Ok(out)
    }

    fn check_features(&self, x: &SigFeatures) -> Result<()> {
        let r = &self.classes[0].representative;
        ensure!(
            x.same_layout(r) && x.len() == r.len(),
            "test features (d={}, N={}, {:?}) do not match the model (d={}, N={}, {:?})",
            x.dim,
            x.order,
            x.kind,
            r.dim,
            r.order,
            r.kind
        );
        Ok(())
    }

    /// Raw per-class scores where class `z` is compared after scaling the
    /// test features by `mask(z)`.
    fn scores_with(&self, x: &SigFeatures, mask: impl Fn(usize) -> ScaleFactors) -> Result<Vec<f64>> {
        self.check_features(x)?;
        self.classes
            .iter()
            .enumerate()
            .map(|(z, c)| {
                self.metric
                    .score(&x.values, &c.representative.values, &mask(z), &ScaleFactors::Identity)
            })
            .collect()
    }

    fn decide(&self, scores: Vec<f64>, decision: &[f64]) -> Prediction {
        let class = argmin(decision);
        Prediction {
            class,
            label: self.classes[class].label.clone(),
            margin: margin_of(decision, class),
            scores,
        }
    }

    /// `plain` or `fixed` decision on precomputed features.
    pub fn predict_features(&self, x: &SigFeatures, protocol: Protocol) -> Result<Prediction> {
        let scores = match protocol {
            Protocol::Plain => self.scores_with(x, |_| ScaleFactors::Identity)?,
            Protocol::Fixed => self.scores_with(x, |z| self.lambda(z).clone())?,
            Protocol::Ova => {
                let thresholds = self
                    .thresholds()
                    .ok_or_else(|| Error::contract("model has no OVA thresholds; calibrate first"))?;
                return self.predict_ova_features(x, &thresholds);
            }
            Protocol::Oracle => {
                return Err(Error::contract(
                    "the oracle protocol needs the true label; use predict_oracle",
                ))
            }
        };
        Ok(self.decide(scores.clone(), &scores))
    }

    pub fn predict(&self, image: &Image, protocol: Protocol, item: u64) -> Result<Prediction> {
        let x = self.instance_features(image, item)?;
        self.predict_features(&x, protocol)
    }

    /// Label-leaking protocol: every comparison uses the true class's mask.
    /// Returns correctness for auditing only.
    pub fn predict_oracle_features(&self, x: &SigFeatures, true_label: &str) -> Result<OracleOutcome> {
        let t = self
            .class_index(true_label)
            .ok_or_else(|| Error::contract(format!("unknown label {true_label:?}")))?;
        let lambda = self.lambda(t).clone();
        let scores = self.scores_with(x, |_| lambda.clone())?;
        let prediction = self.decide(scores.clone(), &scores);
        Ok(OracleOutcome {
            correct: prediction.class == t,
            prediction,
        })
    }

    pub fn predict_oracle(&self, image: &Image, true_label: &str, item: u64) -> Result<OracleOutcome> {
        let x = self.instance_features(image, item)?;
        self.predict_oracle_features(&x, true_label)
    }

    /// One-vs-all: classes whose fixed-protocol score is within their
    /// threshold accept; the accepted class with the smallest
    /// `score / threshold` wins, and if nobody accepts the smallest ratio
    /// over all classes wins.
    pub fn predict_ova_features(&self, x: &SigFeatures, thresholds: &[f64]) -> Result<Prediction> {
        ensure!(
            thresholds.len() == self.classes.len(),
            "expected {} thresholds, got {}",
            self.classes.len(),
            thresholds.len()
        );
        ensure!(
            thresholds.iter().all(|t| t.is_finite() && *t >= 0.0),
            "thresholds must be finite and non-negative"
        );
        let scores = self.scores_with(x, |z| self.lambda(z).clone())?;
        let ratio: Vec<f64> = scores
            .iter()
            .zip(thresholds)
            .map(|(&s, &t)| {
                if t > 0.0 {
                    s / t
                } else if s == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let accepted: Vec<f64> = scores
            .iter()
            .zip(thresholds)
            .zip(&ratio)
            .map(|((s, t), r)| if s <= t { *r } else { f64::INFINITY })
            .collect();
        let decision = if accepted.iter().any(|v| v.is_finite()) { accepted } else { ratio };
        Ok(self.decide(scores, &decision))
    }

    pub fn predict_ova(&self, image: &Image, thresholds: &[f64], item: u64) -> Result<Prediction> {
        let x = self.instance_features(image, item)?;
        self.predict_ova_features(&x, thresholds)
    }

    /// Classifies every test sample under `protocol` and aggregates the results.
    pub fn evaluate(&self, test: &[LabeledImage], protocol: Protocol) -> Result<EvalReport> {
        ensure!(!test.is_empty(), "empty test set");
        let feats = self.instance_features_batch(test)?;
        self.evaluate_features(test, &feats, protocol)
    }

    /// As [`ClassModel::evaluate`] on precomputed instance features.
    pub fn evaluate_features(
        &self,
        test: &[LabeledImage],
        feats: &[SigFeatures],
        protocol: Protocol,
    ) -> Result<EvalReport> {
        ensure!(!test.is_empty(), "empty test set");
        ensure!(test.len() == feats.len(), "sample and feature counts differ");
        let outcomes: Vec<(usize, usize, f64)> = test
            .par_iter()
            .zip(feats)
            .map(|(s, x)| {
                let t = self
                    .class_index(&s.label)
                    .ok_or_else(|| Error::contract(format!("test label {:?} is not a model class", s.label)))?;
                let p = match protocol {
                    Protocol::Oracle => self.predict_oracle_features(x, &s.label)?.prediction,
                    other => self.predict_features(x, other)?,
                };
                Ok((t, p.class, p.margin))
            })
            .collect::<Result<_>>()?;
        Ok(EvalReport::from_outcomes(protocol, self.labels(), &outcomes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub label: String,
    pub total: usize,
    pub correct: usize,
    /// `None` when the class has no test samples.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub protocol: Protocol,
    pub classes: Vec<String>,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    /// Mean of runner-up minus winning decision score.
    pub mean_margin: f64,
}

impl EvalReport {
    /// Aggregates `(true, predicted, margin)` triples.
    pub fn from_outcomes(protocol: Protocol, classes: Vec<String>, outcomes: &[(usize, usize, f64)]) -> Self {
        let k = classes.len();
        let mut confusion = vec![vec![0usize; k]; k];
        let mut margin_sum = 0.0;
        for &(t, p, m) in outcomes {
            confusion[t][p] += 1;
            margin_sum += m;
        }
        let total = outcomes.len();
        let correct = (0..k).map(|i| confusion[i][i]).sum::<usize>();
        let per_class = classes
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let row_total: usize = confusion[i].iter().sum();
                ClassAccuracy {
                    label: label.clone(),
                    total: row_total,
                    correct: confusion[i][i],
                    accuracy: (row_total > 0).then(|| confusion[i][i] as f64 / row_total as f64),
                }
            })
            .collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            protocol,
            classes,
            total,
            correct,
            accuracy: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
            per_class,
            confusion,
            mean_margin: if total > 0 { margin_sum / total as f64 } else { 0.0 },
        }
    }

    /// Confusion matrix as CSV: header `true\predicted,<labels>`, one row per true class.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (label, row) in self.classes.iter().zip(&self.confusion) {
            out.push_str(&csv_field(label));
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_signature::StreamLayout;

    fn img(values: &[f64]) -> Image {
        Image::new(2, 2, 1, values.to_vec()).unwrap()
    }

    fn sample(label: &str, values: &[f64]) -> LabeledImage {
        LabeledImage {
            image: img(values),
            label: label.into(),
            source: String::new(),
        }
    }

    fn config() -> FeatureConfig {
        FeatureConfig {
            convention: StreamConvention::new(StreamLayout::RowsAsSteps, true),
            ..FeatureConfig::new((2, 2), 1, 2)
        }
    }

    #[test]
    fn one_sample_classes_reproduce_their_features() {
        let train = vec![sample("a", &[0.1, 0.9, 0.3, 0.2]), sample("b", &[0.8, 0.2, 0.5, 0.5])];
        let model = fit(&train, &config(), Metric::Rmse).unwrap();
        assert_eq!(model.labels(), vec!["a", "b"]);
        let fa = config().features(&train[0].image).unwrap();
        assert_eq!(model.classes[0].representative, fa);
        assert_eq!(model.classes[0].lambda_rmse, ScaleFactors::ones(fa.len()));
        let p = model.predict(&train[0].image, Protocol::Plain, 0).unwrap();
        assert_eq!(p.label, "a");
        assert_eq!(p.scores[0], 0.0);
        let report = model.evaluate(&train, Protocol::Plain).unwrap();
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn identical_images_give_identical_representative() {
        let s = sample("a", &[0.1, 0.9, 0.3, 0.2]);
        let model = fit(&vec![s.clone(); 5], &config(), Metric::Mae).unwrap();
        let single = fit(&[s], &config(), Metric::Mae).unwrap();
        for (x, y) in model.classes[0].representative.values.iter().zip(&single.classes[0].representative.values) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(model.classes[0].train_count, 5);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let train = vec![sample("a", &[0.5; 4]), sample("b", &[0.5; 4])];
        let model = fit(&train, &config(), Metric::Rmse).unwrap();
        let p = model.predict(&img(&[0.1, 0.2, 0.3, 0.4]), Protocol::Plain, 0).unwrap();
        assert_eq!(p.class, 0);
        assert_eq!(p.margin, 0.0);
    }

    #[test]
    fn declared_class_without_samples_is_rejected() {
        let train = vec![sample("a", &[0.5; 4])];
        let classes = vec!["a".to_string(), "b".to_string()];
        assert!(fit_classes(&train, &classes, &config(), Metric::Rmse).is_err());
        assert!(fit(&[], &config(), Metric::Rmse).is_err());
    }

    #[test]
    fn mismatched_image_size_is_rejected() {
        let model = fit(&[sample("a", &[0.5; 4])], &config(), Metric::Rmse).unwrap();
        let big = Image::filled(3, 3, 1, 0.5).unwrap();
        assert!(model.predict(&big, Protocol::Plain, 0).is_err());
        assert!(model.predict_oracle(&img(&[0.5; 4]), "nope", 0).is_err());
        assert!(model.predict(&img(&[0.5; 4]), Protocol::Oracle, 0).is_err());
    }

    #[test]
    fn ova_rules() {
        let train = vec![sample("a", &[0.1, 0.9, 0.3, 0.2]), sample("b", &[0.8, 0.2, 0.5, 0.5])];
        let model = fit(&train, &config(), Metric::Rmse).unwrap();
        let x = config().features(&train[1].image).unwrap();
        // Class b scores 0; class a is far above its threshold.
        let p = model.predict_ova_features(&x, &[1e-6, 1e-6]).unwrap();
        assert_eq!(p.label, "b");
        // Nobody accepts: fall back to the normalized argmin.
        let y = config().features(&img(&[0.4, 0.6, 0.4, 0.35])).unwrap();
        let scores = model.predict_features(&y, Protocol::Plain).unwrap().scores;
        let tau = [scores[0] / 4.0, scores[1] / 2.0];
        let p = model.predict_ova_features(&y, &tau).unwrap();
        assert_eq!(p.class, 1);
        assert!(model.predict_ova_features(&y, &[1.0]).is_err());
    }

    #[test]
    fn confusion_csv_layout() {
        let r = EvalReport::from_outcomes(
            Protocol::Fixed,
            vec!["x".into(), "y,z".into()],
            &[(0, 0, 0.5), (1, 0, 0.1), (1, 1, 0.3)],
        );
        assert_eq!(r.confusion_csv(), "true\\predicted,x,\"y,z\"\nx,1,0\n\"y,z\",1,1\n");
        assert_eq!(r.correct, 2);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.mean_margin - 0.3).abs() < 1e-15);
        assert_eq!(r.per_class[1].accuracy, Some(0.5));
    }

    #[test]
    fn protocol_names_roundtrip() {
        for p in Protocol::ALL {
            assert_eq!(p.name().parse::<Protocol>().unwrap(), p);
        }
        assert!("best".parse::<Protocol>().is_err());
    }
}
