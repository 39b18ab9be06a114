//! Command-line orchestration: dataset loading, seeded splits, model
//! persistence and report export.
//!
//! Every command is a pure function of the JSON run config, the input files
//! and the seed. Flags override the matching config keys.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::OptimizerConfig;
use crate::classifier::{fit_classes, Calibration, ClassModel, FeatureConfig, Protocol, DEFAULT_OVA_SLACK};
use crate::data_io::{
    encode_pnm, gen_four_shapes, load_cifar10, load_image_dir, load_mnist_idx, resize, AugmentSpec, LabeledImage,
    ShapeJitter, CIFAR10_CLASSES, SHAPE_CLASSES,
};
use crate::embedding::{embed, TsneConfig};
use crate::error::{ensure, Error, Result};
use crate::path_signature::{SigKind, StreamConvention};
use crate::scoring::{Metric, ScaleFactors};
use crate::seeds;
use crate::signal_analysis::export_spectrum;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Procedurally generated shapes; `budgets` images are drawn per class.
    Shapes {
        #[serde(default = "default_shape_size")]
        size: usize,
        #[serde(default)]
        jitter: ShapeJitter,
    },
    /// Class subdirectories of binary PGM/PPM files.
    ImageDir { root: PathBuf },
    Mnist { images: PathBuf, labels: PathBuf },
    Cifar10 { batches: Vec<PathBuf> },
}

fn default_shape_size() -> usize {
    16
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Shapes {
            size: default_shape_size(),
            jitter: ShapeJitter::default(),
        }
    }
}

/// Images per class in each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            train: 10,
            val: 100,
            test: 200,
        }
    }
}

impl Budgets {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraConfig {
    pub window: usize,
    pub polyorder: usize,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        Self {
            window: 20001,
            polyorder: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub samples: usize,
    pub perplexity: f64,
    pub iterations: usize,
    /// PCA target dimension; `None` uses `min(50, n - 1)`.
    pub pca_dim: Option<usize>,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            samples: 300,
            perplexity: 30.0,
            iterations: 1000,
            pca_dim: None,
        }
    }
}

/// One experiment record. Seeds inside nested blocks (augmentation,
/// optimizer) are replaced by sub-streams of `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    /// `(height, width)`; loaded images of another size are resized bilinearly.
    pub image_size: (usize, usize),
    pub channels: usize,
    pub convention: StreamConvention,
    pub kind: SigKind,
    pub order: usize,
    pub metric: Metric,
    pub budgets: Budgets,
    pub calibration: Calibration,
    pub ova_slack: f64,
    pub protocols: Vec<Protocol>,
    pub augmentation: Option<AugmentSpec>,
    pub seed: u64,
    pub out: PathBuf,
    pub spectra: SpectraConfig,
    pub embed: EmbedConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            image_size: (16, 16),
            channels: 3,
            convention: StreamConvention::default(),
            kind: SigKind::Signature,
            order: 2,
            metric: Metric::Rmse,
            budgets: Budgets::default(),
            calibration: Calibration::default(),
            ova_slack: DEFAULT_OVA_SLACK,
            protocols: vec![Protocol::Fixed, Protocol::Oracle],
            augmentation: None,
            seed: 0,
            out: PathBuf::from("out"),
            spectra: SpectraConfig::default(),
            embed: EmbedConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.order >= 1, "order must be >= 1");
        ensure!(self.budgets.train >= 1, "train budget must be >= 1 per class");
        ensure!(self.ova_slack.is_finite() && self.ova_slack > 0.0, "ova_slack must be positive");
        self.feature_config().validate()
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            image_size: self.image_size,
            channels: self.channels,
            convention: self.convention,
            kind: self.kind,
            order: self.order,
            augmentation: self.augmentation.clone().map(|a| AugmentSpec {
                seed: seeds::named(self.seed, "augment"),
                ..a
            }),
        }
    }

    /// Calibration with the optimizer seed derived from the master seed.
    pub fn calibration_method(&self) -> Calibration {
        match &self.calibration {
            Calibration::Optimize(cfg) => Calibration::Optimize(OptimizerConfig {
                seed: seeds::named(self.seed, "optimizer"),
                ..cfg.clone()
            }),
            other => other.clone(),
        }
    }
}

/// Loads the configured dataset, resized to the configured image size, and
/// the class order to use.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Vec<String>, Vec<LabeledImage>)> {
    let (h, w) = cfg.image_size;
    let (classes, samples) = match &cfg.dataset {
        DatasetConfig::Shapes { size, jitter } => {
            let samples = gen_four_shapes(cfg.budgets.total(), *size, jitter, seeds::named(cfg.seed, "shapes"))?;
            (SHAPE_CLASSES.iter().map(|s| s.to_string()).collect(), samples)
        }
        DatasetConfig::ImageDir { root } => {
            let load = load_image_dir(root, Some(cfg.channels))?;
            ensure!(
                !load.images.is_empty(),
                "no readable images under {} ({} failures)",
                root.display(),
                load.failures.len()
            );
            let mut classes: Vec<String> = load.images.iter().map(|s| s.label.clone()).collect();
            classes.dedup();
            (classes, load.images)
        }
        DatasetConfig::Mnist { images, labels } => {
            let samples = load_mnist_idx(images, labels)?;
            ((0..10).map(|d| d.to_string()).collect(), samples)
        }
        DatasetConfig::Cifar10 { batches } => {
            let samples = load_cifar10(batches)?;
            (CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect(), samples)
        }
    };
    let samples = samples
        .into_par_iter()
        .map(|s| {
            if (s.image.height(), s.image.width()) == (h, w) {
                Ok(s)
            } else {
                Ok(LabeledImage {
                    image: resize(&s.image, h, w)?,
                    ..s
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((classes, samples))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub classes: Vec<String>,
    pub train: Vec<LabeledImage>,
    pub val: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

/// Per-class seeded shuffle, then the first `train`, next `val` and next
/// `test` images. Splits are class-major.
pub fn split(classes: &[String], samples: &[LabeledImage], budgets: &Budgets, seed: u64) -> Result<Splits> {
    let base = seeds::named(seed, "split");
    let mut out = Splits {
        classes: classes.to_vec(),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (z, label) in classes.iter().enumerate() {
        let mut idx: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| &s.label == label)
            .map(|(i, _)| i)
            .collect();
        ensure!(
            idx.len() >= budgets.total(),
            "class {label:?} has {} images, budgets need {}",
            idx.len(),
            budgets.total()
        );
        idx.shuffle(&mut seeds::rng(seeds::indexed(base, z as u64)));
        let take = |range: std::ops::Range<usize>| idx[range].iter().map(|&i| samples[i].clone());
        out.train.extend(take(0..budgets.train));
        out.val.extend(take(budgets.train..budgets.train + budgets.val));
        out.test.extend(take(budgets.train + budgets.val..budgets.total()));
    }
    Ok(out)
}

/// Fits representatives and calibrates per config.
pub fn fit_model(cfg: &RunConfig, splits: &Splits) -> Result<ClassModel> {
    let method = cfg.calibration_method();
    if method != Calibration::None {
        ensure!(
            cfg.budgets.val >= 1,
            "validation budget is 0 but calibration needs validation data (set calibration to none)"
        );
    }
    let mut model = fit_classes(&splits.train, &splits.classes, &cfg.feature_config(), cfg.metric)?;
    if cfg.budgets.val >= 1 {
        model.calibrate(&splits.val, &method, cfg.ova_slack)?;
    }
    Ok(model)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_model(model: &ClassModel, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(model)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn load_model(path: &Path) -> Result<ClassModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model: ClassModel = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    model.validate()?;
    Ok(model)
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

#[derive(Parser, Debug)]
#[command(name = "sigclass", version, about = "Signature-based few-shot image classification")]
pub struct Cli {
    /// JSON run config; missing keys take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render the procedural shapes dataset as PPM files plus a manifest.
    GenShapes {
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Fit representatives, calibrate and write model.json.
    Fit,
    /// Evaluate a model on the test split.
    Eval {
        /// Model file (default: <out>/model.json).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated protocols: plain, fixed, ova, oracle.
        #[arg(long, value_delimiter = ',')]
        protocol: Vec<String>,
    },
    /// Export smoothed |representative| spectra, one CSV per class.
    Spectra {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        polyorder: Option<usize>,
    },
    /// PCA + t-SNE coordinates of a sample of signatures.
    Embed {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        perplexity: Option<f64>,
    },
}

impl Cli {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }
}

/// Executes one command; returns the lines to print on stdout.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let cfg = cli.run_config()?;
    match &cli.command {
        Command::GenShapes { per_class, size } => cmd_gen_shapes(&cfg, *per_class, *size),
        Command::Fit => cmd_fit(&cfg),
        Command::Eval { model, protocol } => {
            let protocols = if protocol.is_empty() {
                cfg.protocols.clone()
            } else {
                protocol.iter().map(|p| p.parse()).collect::<Result<Vec<Protocol>>>()?
            };
            let model = model.clone().unwrap_or_else(|| cfg.out.join("model.json"));
            cmd_eval(&cfg, &model, &protocols)
        }
        Command::Spectra {
            model,
            window,
            polyorder,
        } => {
            let model = model.clone().unwrap_or_else(|| cfg.out.join("model.json"));
            cmd_spectra(
                &cfg,
                &model,
                window.unwrap_or(cfg.spectra.window),
                polyorder.unwrap_or(cfg.spectra.polyorder),
            )
        }
        Command::Embed { samples, perplexity } => {
            let mut e = cfg.embed.clone();
            if let Some(n) = samples {
                e.samples = *n;
            }
            if let Some(p) = perplexity {
                e.perplexity = *p;
            }
            cmd_embed(&cfg, &e)
        }
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    label: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    schema_version: u32,
    seed: u64,
    size: usize,
    per_class: usize,
    jitter: ShapeJitter,
    files: Vec<ManifestEntry>,
}

pub fn cmd_gen_shapes(cfg: &RunConfig, per_class: Option<usize>, size: Option<usize>) -> Result<Vec<String>> {
    let (cfg_size, jitter) = match &cfg.dataset {
        DatasetConfig::Shapes { size, jitter } => (*size, *jitter),
        _ => (default_shape_size(), ShapeJitter::default()),
    };
    let size = size.unwrap_or(cfg_size);
    let per_class = per_class.unwrap_or(cfg.budgets.total());
    let seed = seeds::named(cfg.seed, "shapes");
    let samples = gen_four_shapes(per_class, size, &jitter, seed)?;
    let mut files = Vec::with_capacity(samples.len());
    let mut counts = vec![0usize; SHAPE_CLASSES.len()];
    for s in &samples {
        let z = SHAPE_CLASSES.iter().position(|c| *c == s.label).expect("generator label");
        let rel = format!("{}/{}_{:04}.ppm", s.label, s.label, counts[z]);
        counts[z] += 1;
        write_file(&cfg.out.join(&rel), &encode_pnm(&s.image.to_channels(3)?))?;
        files.push(ManifestEntry {
            path: rel,
            label: s.label.clone(),
        });
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        seed: cfg.seed,
        size,
        per_class,
        jitter,
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&cfg.out.join("manifest.json"), text.as_bytes())?;
    Ok(vec![format!(
        "wrote {} images ({} classes x {per_class}) to {}",
        samples.len(),
        SHAPE_CLASSES.len(),
        cfg.out.display()
    )])
}

fn lambda_stats(lambda: &ScaleFactors, n: usize) -> (f64, f64, f64) {
    let values: Vec<f64> = (0..n).map(|i| lambda.get(i)).collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, values.iter().sum::<f64>() / n as f64, max)
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let (classes, samples) = load_dataset(cfg)?;
    let splits = split(&classes, &samples, &cfg.budgets, cfg.seed)?;
    let model = fit_model(cfg, &splits)?;
    let path = cfg.out.join("model.json");
    save_model(&model, &path)?;
    let n = model.feature_len();
    let mut lines = vec![format!(
        "fitted {} classes, feature length {n} (d={}, N={}), metric {:?}",
        model.classes.len(),
        model.features.stream_dim(),
        model.features.order,
        model.metric
    )];
    for (z, c) in model.classes.iter().enumerate() {
        let (min, mean, max) = lambda_stats(model.lambda(z), n);
        lines.push(format!(
            "  {}: train {}, features {}, lambda min {min:.6e} mean {mean:.6e} max {max:.6e}",
            c.label,
            c.train_count,
            c.representative.len()
        ));
    }
    lines.push(format!("model written to {}", path.display()));
    Ok(lines)
}

pub fn cmd_eval(cfg: &RunConfig, model_path: &Path, protocols: &[Protocol]) -> Result<Vec<String>> {
    ensure!(!protocols.is_empty(), "no protocol selected");
    if !model_path.exists() {
        let hint = std::io::Error::new(std::io::ErrorKind::NotFound, "model file not found (run fit first)");
        return Err(Error::io(model_path, hint));
    }
    let model = load_model(model_path)?;
    let (classes, samples) = load_dataset(cfg)?;
    let splits = split(&classes, &samples, &cfg.budgets, cfg.seed)?;
    ensure!(!splits.test.is_empty(), "test budget is 0");
    let feats = splits
        .test
        .par_iter()
        .enumerate()
        .map(|(i, s)| model.instance_features(&s.image, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut lines = Vec::new();
    for &p in protocols {
        let report = model.evaluate_features(&splits.test, &feats, p)?;
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        write_file(&cfg.out.join(format!("report_{p}.json")), json.as_bytes())?;
        write_file(&cfg.out.join(format!("confusion_{p}.csv")), report.confusion_csv().as_bytes())?;
        lines.push(format!(
            "{p}: accuracy {:.4} ({}/{}), mean margin {:.6e}",
            report.accuracy, report.correct, report.total, report.mean_margin
        ));
    }
    Ok(lines)
}

pub fn cmd_spectra(cfg: &RunConfig, model_path: &Path, window: usize, polyorder: usize) -> Result<Vec<String>> {
    let model = load_model(model_path)?;
    let series = export_spectrum(&model, window, polyorder)?;
    let mut lines = Vec::new();
    for (z, s) in series.iter().enumerate() {
        let path = cfg.out.join(format!("spectrum_{z:02}_{}.csv", file_stem(&s.label)));
        write_file(&path, s.to_csv().as_bytes())?;
        lines.push(format!(
            "{}: {} components, window {}, polyorder {} -> {}",
            s.label,
            s.raw_abs.len(),
            s.window,
            s.polyorder,
            path.display()
        ));
    }
    Ok(lines)
}

pub fn cmd_embed(cfg: &RunConfig, e: &EmbedConfig) -> Result<Vec<String>> {
    let features = cfg.feature_config();
    features.validate()?;
    let (_, samples) = load_dataset(cfg)?;
    ensure!(
        e.samples <= samples.len(),
        "embedding budget {} exceeds the {} available images",
        e.samples,
        samples.len()
    );
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut seeds::rng(seeds::named(cfg.seed, "embed")));
    idx.truncate(e.samples);
    idx.sort_unstable();
    let chosen: Vec<&LabeledImage> = idx.iter().map(|&i| &samples[i]).collect();
    let feats = chosen
        .par_iter()
        .map(|s| features.features(&s.image))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = chosen.iter().map(|s| s.label.clone()).collect();
    let tsne = TsneConfig {
        perplexity: e.perplexity,
        iterations: e.iterations,
        seed: seeds::named(cfg.seed, "tsne"),
        ..TsneConfig::default()
    };
    let result = embed(&feats, &labels, e.pca_dim, &tsne)?;
    let path = cfg.out.join("embedding.csv");
    write_file(&path, result.to_csv().as_bytes())?;
    let (first, last) = (result.kl_trace[0].1, result.kl_trace[result.kl_trace.len() - 1].1);
    Ok(vec![format!(
        "embedded {} samples, KL {first:.6} -> {last:.6}, written to {}",
        result.coords.len(),
        path.display()
    )])
}

/// Single-line machine-readable error report.
pub fn error_json(kind: &str, message: &str) -> String {
    let message = message.replace(['\n', '\r'], " ");
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}
