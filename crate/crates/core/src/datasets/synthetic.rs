//! Procedural image families with recorded ground-truth blur, and quadruplet construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{gaussian_blur, Image};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    NoiseTexture,
    Geometric,
    GradientBlobs,
}

impl Family {
    pub const ALL: [Family; 3] = [
        Family::NoiseTexture,
        Family::Geometric,
        Family::GradientBlobs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::NoiseTexture => "noise_texture",
            Family::Geometric => "geometric",
            Family::GradientBlobs => "gradient_blobs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: Family,
    pub base_count: usize,
    /// Blurred instances emitted per base image, each with its own sigma.
    #[serde(default = "one")]
    pub instances_per_base: usize,
    pub sigma_range: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    #[serde(default)]
    pub label_noise_prob: f64,
}

fn one() -> usize {
    1
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.sigma_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo) {
            return Err(Error::invalid(format!("bad sigma range [{lo}, {hi}]")));
        }
        if self.base_count < 2 {
            return Err(Error::invalid("base_count must be at least 2"));
        }
        if self.instances_per_base == 0 {
            return Err(Error::invalid("instances_per_base must be at least 1"));
        }
        if self.width < 12 || self.height < 12 {
            return Err(Error::invalid("synthetic images must be at least 12x12"));
        }
        if !(0.0..0.5).contains(&self.label_noise_prob) {
            return Err(Error::invalid("label_noise_prob must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticImage {
    pub image: Image,
    pub sigma: f64,
    pub base_index: usize,
}

/// Generates `base_count * instances_per_base` blurred images, deterministically per seed.
pub fn generate_synthetic_images(spec: &SyntheticSpec) -> Result<Vec<SyntheticImage>> {
    spec.validate()?;
    let mut content_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sigma_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sigma_rng.set_stream(1);
    let [lo, hi] = spec.sigma_range;
    let mut out = Vec::with_capacity(spec.base_count * spec.instances_per_base);
    for base_index in 0..spec.base_count {
        let base = render_base(spec.family, spec.width, spec.height, &mut content_rng)?;
        for _ in 0..spec.instances_per_base {
            let sigma = if hi > lo {
                sigma_rng.gen_range(lo..=hi)
            } else {
                lo
            };
            out.push(SyntheticImage {
                image: gaussian_blur(&base, sigma)?,
                sigma,
                base_index,
            });
        }
    }
    Ok(out)
}

/// Renders one sharp base image of the given family.
pub fn render_base(family: Family, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    match family {
        Family::NoiseTexture => noise_texture(w, h, rng),
        Family::Geometric => geometric(w, h, rng),
        Family::GradientBlobs => gradient_blobs(w, h, rng),
    }
}

fn noise_texture(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    let level = rng.gen_range(0.35..0.65);
    let contrast = rng.gen_range(0.12..0.22);
    let drift = rng.gen_range(0.05..0.15);
    let grain = rng.gen_range(0.6..1.2);
    let fine = gaussian_blur(
        &Image::new(w, h, (0..w * h).map(|_| rng.gen::<f64>()).collect())?,
        grain,
    )?;
    let low = gaussian_blur(
        &Image::new(w, h, (0..w * h).map(|_| rng.gen::<f64>()).collect())?,
        6.0,
    )?;
    let mean = |img: &Image| img.data().iter().sum::<f64>() / (w * h) as f64;
    let (fine_mean, low_mean) = (mean(&fine), mean(&low));
    let fine_std = (fine
        .data()
        .iter()
        .map(|v| (v - fine_mean).powi(2))
        .sum::<f64>()
        / (w * h) as f64)
        .sqrt();
    Image::from_fn(w, h, |x, y| {
        level
            + contrast * (fine.get(x, y) - fine_mean) / fine_std * 0.5
            + drift * 8.0 * (low.get(x, y) - low_mean)
    })
}

fn geometric(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    let mut data = vec![rng.gen_range(0.2..0.8); w * h];
    let shapes = rng.gen_range(8..16);
    let (wf, hf) = (w as f64, h as f64);
    for _ in 0..shapes {
        let value = rng.gen_range(0.0..1.0);
        let cx = rng.gen_range(0.0..wf);
        let cy = rng.gen_range(0.0..hf);
        let size = rng.gen_range(0.08..0.3) * wf.min(hf);
        match rng.gen_range(0..3) {
            0 => {
                let aspect: f64 = rng.gen_range(0.4..2.5);
                let (hw, hh) = (size * aspect.sqrt() / 2.0, size / aspect.sqrt() / 2.0);
                fill(&mut data, w, h, value, |x, y| {
                    (x - cx).abs() <= hw && (y - cy).abs() <= hh
                });
            }
            1 => {
                let r = size / 2.0;
                fill(&mut data, w, h, value, |x, y| {
                    (x - cx).powi(2) + (y - cy).powi(2) <= r * r
                });
            }
            _ => {
                // Thick line segment.
                let angle = rng.gen_range(0.0..std::f64::consts::PI);
                let (dx, dy) = (angle.cos(), angle.sin());
                let half_len = size;
                let half_width = rng.gen_range(1.0..3.5);
                fill(&mut data, w, h, value, |x, y| {
                    let (px, py) = (x - cx, y - cy);
                    let along = px * dx + py * dy;
                    let across = -px * dy + py * dx;
                    along.abs() <= half_len && across.abs() <= half_width
                });
            }
        }
    }
    Image::new(w, h, data)
}

fn gradient_blobs(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    let (wf, hf) = (w as f64, h as f64);
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let slope = rng.gen_range(0.2..0.5);
    let base = rng.gen_range(0.3..0.7);
    let (gx, gy) = (angle.cos() * slope / wf, angle.sin() * slope / hf);
    let mut data: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64 - wf / 2.0, (i / w) as f64 - hf / 2.0);
            base + gx * x + gy * y
        })
        .collect();
    let blobs = rng.gen_range(5..10);
    for _ in 0..blobs {
        let cx = rng.gen_range(0.0..wf);
        let cy = rng.gen_range(0.0..hf);
        let rx = rng.gen_range(0.06..0.22) * wf;
        let ry = rng.gen_range(0.06..0.22) * hf;
        let center = rng.gen_range(0.0..1.0);
        let rim = (center + rng.gen_range(-0.4..0.4_f64)).clamp(0.0, 1.0);
        for y in 0..h {
            for x in 0..w {
                let r2 = ((x as f64 - cx) / rx).powi(2) + ((y as f64 - cy) / ry).powi(2);
                if r2 <= 1.0 {
                    data[y * w + x] = center + (rim - center) * r2;
                }
            }
        }
    }
    Image::new(w, h, data)
}

fn fill(data: &mut [f64], w: usize, h: usize, value: f64, inside: impl Fn(f64, f64) -> bool) {
    for y in 0..h {
        for x in 0..w {
            if inside(x as f64 + 0.5, y as f64 + 0.5) {
                data[y * w + x] = value;
            }
        }
    }
}

/// Two clean images plus both degraded by one shared Gaussian kernel.
#[derive(Clone, Debug)]
pub struct Quadruplet<'a> {
    pub x1: &'a Image,
    pub x2: &'a Image,
    pub x1d: Image,
    pub x2d: Image,
    pub sigma_d: f64,
}

pub const DEFAULT_DEGRADATION_RANGE: [f64; 2] = [0.5, 3.0];

pub fn make_quadruplet<'a>(
    x1: &'a Image,
    x2: &'a Image,
    sigma_range: [f64; 2],
    rng: &mut impl Rng,
) -> Result<Quadruplet<'a>> {
    let sigma_d = sample_sigma(sigma_range, rng)?;
    Ok(Quadruplet {
        x1,
        x2,
        x1d: gaussian_blur(x1, sigma_d)?,
        x2d: gaussian_blur(x2, sigma_d)?,
        sigma_d,
    })
}

pub fn sample_sigma(range: [f64; 2], rng: &mut impl Rng) -> Result<f64> {
    let [lo, hi] = range;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo) {
        return Err(Error::invalid(format!(
            "bad degradation range [{lo}, {hi}]"
        )));
    }
    Ok(if hi > lo { rng.gen_range(lo..=hi) } else { lo })
}

/// Blur that results from blurring an image of blur `sigma` once more by `sigma_d`.
pub fn effective_sigma(sigma: f64, sigma_d: f64) -> f64 {
    sigma.hypot(sigma_d)
}
