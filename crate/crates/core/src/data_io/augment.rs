use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{ensure, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    None,
    /// Multiplicative Gaussian noise `p * (1 + N(0, sigma))`.
    Speckle { sigma: f64 },
    /// Each pixel is replaced by 0 or 1 (equiprobably) with probability `p`.
    SaltPepper { p: f64 },
}

/// Random contrast/brightness jitter plus optional noise, applied to
/// `copies` independent copies of an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub contrast: (f64, f64),
    pub brightness: (f64, f64),
    pub noise: Noise,
    pub copies: usize,
    /// Replaced by a derived sub-stream when run through the CLI.
    #[serde(default)]
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            contrast: (0.8, 1.2),
            brightness: (-0.1, 0.1),
            noise: Noise::None,
            copies: 8,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn new(
        contrast: (f64, f64),
        brightness: (f64, f64),
        noise: Noise,
        copies: usize,
        seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            contrast,
            brightness,
            noise,
            copies,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// No-op jitter: unit contrast, zero brightness, no noise.
    pub fn identity(copies: usize, seed: u64) -> Self {
        Self {
            contrast: (1.0, 1.0),
            brightness: (0.0, 0.0),
            noise: Noise::None,
            copies,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("contrast", self.contrast), ("brightness", self.brightness)] {
            ensure!(
                lo.is_finite() && hi.is_finite() && lo <= hi,
                "{name} range [{lo}, {hi}] must be finite and ordered"
            );
        }
        ensure!(self.copies >= 1, "augmentation needs at least one copy");
        match self.noise {
            Noise::None => {}
            Noise::Speckle { sigma } => {
                ensure!(sigma.is_finite() && sigma >= 0.0, "speckle sigma must be >= 0, got {sigma}")
            }
            Noise::SaltPepper { p } => {
                ensure!((0.0..=1.0).contains(&p), "salt & pepper p must be in [0, 1], got {p}")
            }
        }
        Ok(())
    }

    /// The same spec with its seed replaced by the sub-stream for `index`.
    pub fn for_item(&self, index: u64) -> Self {
        Self {
            seed: seeds::indexed(self.seed, index),
            ..self.clone()
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Produces `spec.copies` jittered copies. Copy `i` draws from its own
/// seeded stream, so results do not depend on how many copies are requested.
pub fn augment(image: &Image, spec: &AugmentSpec) -> Vec<Image> {
    let c = image.channels();
    (0..spec.copies as u64)
        .map(|i| {
            let mut rng = seeds::rng(seeds::indexed(spec.seed, i));
            let contrast = uniform(&mut rng, spec.contrast);
            let brightness = uniform(&mut rng, spec.brightness);
            let mut data: Vec<f64> = image
                .data()
                .iter()
                .map(|&p| (contrast * (p - 0.5) + 0.5 + brightness).clamp(0.0, 1.0))
                .collect();
            match spec.noise {
                Noise::None => {}
                Noise::Speckle { sigma } => {
                    if sigma > 0.0 {
                        let normal = Normal::new(0.0, sigma).expect("validated sigma");
                        for v in &mut data {
                            *v = (*v * (1.0 + normal.sample(&mut rng))).clamp(0.0, 1.0);
                        }
                    }
                }
                Noise::SaltPepper { p } => {
                    for px in data.chunks_exact_mut(c) {
                        if rng.random_bool(p) {
                            let value = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                            px.fill(value);
                        }
                    }
                }
            }
            image.map_data(data)
        })
        .collect()
}
