//! Procedural stand-in for the Four Shapes dataset: white square, star,
//! circle and triangle on black, with seeded placement jitter.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Image, LabeledImage};
use crate::error::{ensure, Result};
use crate::seeds;

pub const SHAPE_CLASSES: [&str; 4] = ["square", "star", "circle", "triangle"];

const SUPERSAMPLE: usize = 4;
/// Inner/outer radius ratio of a regular five-pointed star.
const STAR_INNER: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeJitter {
    /// Maximum centre offset along each axis, as a fraction of image size.
    pub center: f64,
    /// Range of the shape's outer diameter as a fraction of image size.
    pub scale: (f64, f64),
    /// Random rotation of squares, stars and triangles.
    pub rotate: bool,
}

impl Default for ShapeJitter {
    fn default() -> Self {
        Self {
            center: 0.1,
            scale: (0.6, 0.9),
            rotate: true,
        }
    }
}

impl ShapeJitter {
    /// Centred, unrotated shapes of fixed diameter `scale`.
    pub fn none(scale: f64) -> Self {
        Self {
            center: 0.0,
            scale: (scale, scale),
            rotate: false,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure!(
            self.center.is_finite() && (0.0..0.5).contains(&self.center),
            "centre jitter must be in [0, 0.5), got {}",
            self.center
        );
        let (lo, hi) = self.scale;
        ensure!(
            lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi,
            "scale range [{lo}, {hi}] must be positive and ordered"
        );
        Ok(())
    }
}

fn draw(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Even-odd rule point-in-polygon test.
fn inside_polygon(x: f64, y: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn polygon(cx: f64, cy: f64, radii: &[f64], start: f64) -> Vec<(f64, f64)> {
    let n = radii.len();
    radii
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let a = start + 2.0 * PI * k as f64 / n as f64;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn render(class: usize, size: usize, jitter: &ShapeJitter, rng: &mut impl Rng) -> Image {
    let s = size as f64;
    let cx = s / 2.0 + draw(rng, -jitter.center, jitter.center) * s;
    let cy = s / 2.0 + draw(rng, -jitter.center, jitter.center) * s;
    let radius = draw(rng, jitter.scale.0, jitter.scale.1) * s / 2.0;
    let theta = if jitter.rotate { draw(rng, 0.0, 2.0 * PI) } else { 0.0 };

    let poly = match SHAPE_CLASSES[class] {
        "square" => Some(polygon(cx, cy, &[radius; 4], theta + PI / 4.0)),
        "star" => {
            let radii: Vec<f64> = (0..10)
                .map(|k| if k % 2 == 0 { radius } else { radius * STAR_INNER })
                .collect();
            Some(polygon(cx, cy, &radii, theta - PI / 2.0))
        }
        "triangle" => Some(polygon(cx, cy, &[radius; 3], theta - PI / 2.0)),
        _ => None,
    };
    let covered = |x: f64, y: f64| match &poly {
        Some(p) => inside_polygon(x, y, p),
        None => (x - cx).powi(2) + (y - cy).powi(2) <= radius * radius,
    };

    let sub = SUPERSAMPLE as f64;
    let mut data = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let mut hits = 0usize;
            for i in 0..SUPERSAMPLE {
                for j in 0..SUPERSAMPLE {
                    let x = col as f64 + (j as f64 + 0.5) / sub;
                    let y = row as f64 + (i as f64 + 0.5) / sub;
                    hits += usize::from(covered(x, y));
                }
            }
            data.push(hits as f64 / (sub * sub));
        }
    }
    Image::new(size, size, 1, data).expect("coverage values lie in [0, 1]")
}

/// Renders `per_class` grayscale images of each shape class, classes in
/// [`SHAPE_CLASSES`] order. Every image has its own seed stream derived from
/// `(seed, class, index)`.
pub fn gen_four_shapes(
    per_class: usize,
    size: usize,
    jitter: &ShapeJitter,
    seed: u64,
) -> Result<Vec<LabeledImage>> {
    ensure!(size >= 8, "shape images must be at least 8 pixels, got {size}");
    jitter.validate()?;
    let mut out = Vec::with_capacity(per_class * SHAPE_CLASSES.len());
    for (class, name) in SHAPE_CLASSES.iter().enumerate() {
        let class_seed = seeds::indexed(seed, class as u64);
        for i in 0..per_class {
            let mut rng = seeds::rng(seeds::indexed(class_seed, i as u64));
            out.push(LabeledImage {
                image: render(class, size, jitter, &mut rng),
                label: (*name).to_string(),
                source: format!("shapes:{seed}:{name}:{i}"),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = gen_four_shapes(1, 16, &ShapeJitter::default(), 5).unwrap();
        let b = gen_four_shapes(1, 16, &ShapeJitter::default(), 5).unwrap();
        assert_eq!(a, b);
        let c = gen_four_shapes(1, 16, &ShapeJitter::default(), 6).unwrap();
        assert_ne!(a, c);
        // Requesting more samples does not change the earlier ones.
        let d = gen_four_shapes(3, 16, &ShapeJitter::default(), 5).unwrap();
        assert_eq!(a[0], d[0]);
        assert_eq!(a[1], d[3]);
    }

    #[test]
    fn circle_has_fourfold_mass_symmetry() {
        let set = gen_four_shapes(1, 32, &ShapeJitter::none(0.7), 0).unwrap();
        let circle = &set.iter().find(|s| s.label == "circle").unwrap().image;
        let mut quadrant = [0.0f64; 4];
        for r in 0..32 {
            for c in 0..32 {
                quadrant[(r / 16) * 2 + c / 16] += circle.pixel(r, c)[0];
            }
        }
        let mean = quadrant.iter().sum::<f64>() / 4.0;
        assert!(mean > 0.0);
        for q in quadrant {
            assert!((q - mean).abs() / mean < 0.01, "{quadrant:?}");
        }
        // Area close to pi r^2.
        let r = 0.35 * 32.0;
        let area: f64 = quadrant.iter().sum();
        assert!((area - PI * r * r).abs() / (PI * r * r) < 0.02);
    }

    #[test]
    fn default_train_budget() {
        let set = gen_four_shapes(10, 16, &ShapeJitter::default(), 1).unwrap();
        assert_eq!(set.len(), 40);
        for name in SHAPE_CLASSES {
            assert_eq!(set.iter().filter(|s| s.label == name).count(), 10);
        }
        for s in &set {
            assert_eq!((s.image.height(), s.image.width(), s.image.channels()), (16, 16, 1));
            assert!(s.image.data().iter().any(|&v| v > 0.5));
        }
    }

    #[test]
    fn shapes_have_distinct_areas() {
        let set = gen_four_shapes(1, 64, &ShapeJitter::none(0.8), 0).unwrap();
        let mass: Vec<f64> = set.iter().map(|s| s.image.data().iter().sum()).collect();
        // circle > square > star and triangle, for equal circumradius.
        let by = |n: &str| mass[SHAPE_CLASSES.iter().position(|c| *c == n).unwrap()];
        assert!(by("circle") > by("square"));
        assert!(by("square") > by("triangle"));
        assert!(by("square") > by("star"));
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(gen_four_shapes(1, 7, &ShapeJitter::default(), 0).is_err());
    }
}
