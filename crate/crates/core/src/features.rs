//! Fixed 12-dimensional blur-sensitive descriptor and its z-score normalizer.
//!
//! Per scale `s` in {1, 2, 4} (bilinear downsample to `w/s x h/s`):
//!
//! | slot | statistic |
//! |------|-----------|
//! | 0 | `ln(1 + var(laplacian))` |
//! | 1 | mean gradient magnitude (central differences) |
//! | 2 | 90th-percentile gradient magnitude |
//! | 3 | `ln(1 + lv(img) / (lv(blur(img, 1)) + 1e-8))` |
//!
//! Scale `k` occupies slots `4k..4k+4`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{gaussian_blur, laplacian_variance, resize_bilinear, Image};

pub const FEATURE_DIM: usize = 12;
pub const SCALES: [usize; 3] = [1, 2, 4];
pub const MIN_FEATURE_SIDE: usize = 12;
const STATS_PER_SCALE: usize = 4;
const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

pub fn extract_features(img: &Image) -> Result<FeatureVector> {
    if img.width() < MIN_FEATURE_SIDE || img.height() < MIN_FEATURE_SIDE {
        return Err(Error::invalid(format!(
            "feature extraction needs at least {MIN_FEATURE_SIDE}x{MIN_FEATURE_SIDE} pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let mut out = [0.0; FEATURE_DIM];
    for (k, &s) in SCALES.iter().enumerate() {
        let scaled;
        let view = if s == 1 {
            img
        } else {
            scaled = resize_bilinear(img, img.width() / s, img.height() / s)?;
            &scaled
        };
        let stats = scale_statistics(view)?;
        out[k * STATS_PER_SCALE..(k + 1) * STATS_PER_SCALE].copy_from_slice(&stats);
    }
    Ok(FeatureVector(out))
}

fn scale_statistics(img: &Image) -> Result<[f64; STATS_PER_SCALE]> {
    let lv = laplacian_variance(img)?;
    let lv_smoothed = laplacian_variance(&gaussian_blur(img, 1.0)?)?;
    let mut magnitudes = gradient_magnitudes(img);
    let mean_grad = magnitudes.iter().sum::<f64>() / magnitudes.len() as f64;
    let p90 = percentile(&mut magnitudes, 0.9);
    let hf_ratio = lv / (lv_smoothed + 1e-8);
    Ok([lv.ln_1p(), mean_grad, p90, hf_ratio.ln_1p()])
}

fn gradient_magnitudes(img: &Image) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = 0.5 * (img.get(right, y) - img.get(left, y));
            let gy = 0.5 * (img.get(x, down) - img.get(x, up));
            out.push(gx.hypot(gy));
        }
    }
    out
}

// Nearest-rank on index floor(q * (n - 1)); reorders `values`.
fn percentile(values: &mut [f64], q: f64) -> f64 {
    let idx = (q * (values.len() - 1) as f64).floor() as usize;
    let (_, v, _) = values.select_nth_unstable_by(idx, f64::total_cmp);
    *v
}

/// Per-dimension z-scoring fitted on training images only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl FeatureNormalizer {
    /// Fits population mean and standard deviation, flooring the latter at `1e-8`.
    pub fn fit(features: &[FeatureVector]) -> Result<Self> {
        if features.len() < 2 {
            return Err(Error::invalid(format!(
                "normalizer needs at least 2 training images, got {}",
                features.len()
            )));
        }
        // Welford: a constant column keeps its mean bit-exact and its variance exactly zero.
        let mut mean = [0.0; FEATURE_DIM];
        let mut m2 = [0.0; FEATURE_DIM];
        for (k, f) in features.iter().enumerate() {
            let count = (k + 1) as f64;
            for d in 0..FEATURE_DIM {
                let delta = f.0[d] - mean[d];
                mean[d] += delta / count;
                m2[d] += delta * (f.0[d] - mean[d]);
            }
        }
        let n = features.len() as f64;
        let std = m2.map(|s| (s / n).sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, f: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            out[i] = (f.0[i] - self.mean[i]) / self.std[i];
        }
        FeatureVector(out)
    }

    pub fn is_valid(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite())
            && self.std.iter().all(|v| v.is_finite() && *v >= STD_FLOOR)
    }
}

pub fn fit_normalizer(train_images: &[Image]) -> Result<FeatureNormalizer> {
    if train_images.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let feats = train_images
        .iter()
        .map(extract_features)
        .collect::<Result<Vec<_>>>()?;
    FeatureNormalizer::fit(&feats)
}
