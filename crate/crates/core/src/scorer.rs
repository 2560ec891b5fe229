//! One-hidden-layer scorer `y = sigmoid(w2 . tanh(W1 f + b1) + b2)` with
//! hand-written backward pass, plus SGD with momentum/weight decay and a
//! cosine-annealed learning rate.
//!
//! Scores are sharpness-oriented: the margin ranking objective is minimized
//! when the blurrier image of a pair receives the lower score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DIM};

pub const HIDDEN_DIM: usize = 8;

/// Scorer weights. Also used as the gradient and velocity container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    pub w1: [[f64; FEATURE_DIM]; HIDDEN_DIM],
    pub b1: [f64; HIDDEN_DIM],
    pub w2: [f64; HIDDEN_DIM],
    pub b2: f64,
}

impl ScorerParams {
    pub fn zeros() -> Self {
        Self {
            w1: [[0.0; FEATURE_DIM]; HIDDEN_DIM],
            b1: [0.0; HIDDEN_DIM],
            w2: [0.0; HIDDEN_DIM],
            b2: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases; deterministic per seed.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = glorot_bound(FEATURE_DIM, HIDDEN_DIM);
        let a2 = glorot_bound(HIDDEN_DIM, 1);
        let mut p = Self::zeros();
        for row in &mut p.w1 {
            for w in row.iter_mut() {
                *w = rng.gen_range(-a1..a1);
            }
        }
        for w in &mut p.w2 {
            *w = rng.gen_range(-a2..a2);
        }
        p
    }

    /// Number of scalar parameters.
    pub const LEN: usize = HIDDEN_DIM * FEATURE_DIM + 2 * HIDDEN_DIM + 1;

    /// Flat view in the order `w1` (row-major), `b1`, `w2`, `b2`.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .flatten()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(std::iter::once(&self.b2))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .flatten()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(std::iter::once(&mut self.b2))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ScorerParams, scale: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Sharpness-oriented score strictly inside `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct BlurScore(f64);

impl BlurScore {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::invalid(format!("blur score {value} outside (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Activations kept from `forward` for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: [f64; FEATURE_DIM],
    hidden: [f64; HIDDEN_DIM],
    score: f64,
}

impl ForwardCache {
    pub fn score(&self) -> BlurScore {
        BlurScore(self.score)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn forward(params: &ScorerParams, f: &FeatureVector) -> Result<(BlurScore, ForwardCache)> {
    if !f.is_finite() {
        return Err(Error::invalid("non-finite feature value"));
    }
    let input = f.0;
    let mut hidden = [0.0; HIDDEN_DIM];
    for (h, (row, b)) in hidden.iter_mut().zip(params.w1.iter().zip(params.b1)) {
        let pre: f64 = row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>() + b;
        *h = pre.tanh();
    }
    let z: f64 = params
        .w2
        .iter()
        .zip(&hidden)
        .map(|(w, h)| w * h)
        .sum::<f64>()
        + params.b2;
    // Keep the score strictly inside (0, 1) even where sigmoid rounds to a bound.
    let score = sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    Ok((
        BlurScore(score),
        ForwardCache {
            input,
            hidden,
            score,
        },
    ))
}

/// Score only, for evaluation paths that never backpropagate.
pub fn score(params: &ScorerParams, f: &FeatureVector) -> Result<BlurScore> {
    forward(params, f).map(|(s, _)| s)
}

/// Gradients of `dl_dscore * y` with respect to every parameter.
pub fn backward(params: &ScorerParams, cache: &ForwardCache, dl_dscore: f64) -> ScorerParams {
    let mut grads = ScorerParams::zeros();
    accumulate_backward(params, cache, dl_dscore, &mut grads);
    grads
}

/// Adds the gradient of `dl_dscore * y` into `grads`.
pub fn accumulate_backward(
    params: &ScorerParams,
    cache: &ForwardCache,
    dl_dscore: f64,
    grads: &mut ScorerParams,
) {
    if dl_dscore == 0.0 {
        return;
    }
    let y = cache.score;
    let dz = dl_dscore * y * (1.0 - y);
    grads.b2 += dz;
    for j in 0..HIDDEN_DIM {
        let h = cache.hidden[j];
        grads.w2[j] += dz * h;
        let dpre = dz * params.w2[j] * (1.0 - h * h);
        grads.b1[j] += dpre;
        for (g, x) in grads.w1[j].iter_mut().zip(&cache.input) {
            *g += dpre * x;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 0.0005,
        }
    }
}

/// Momentum buffers and step bookkeeping for [`sgd_step`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub velocity: ScorerParams,
    pub step: usize,
    pub total_steps: usize,
}

impl OptState {
    pub fn new(total_steps: usize) -> Self {
        Self {
            velocity: ScorerParams::zeros(),
            step: 0,
            total_steps,
        }
    }
}

/// `g' = g + wd*theta; v = m*v - lr*g'; theta += v`, then advances the step counter.
pub fn sgd_step(
    params: &mut ScorerParams,
    grads: &ScorerParams,
    state: &mut OptState,
    lr: f64,
    config: SgdConfig,
) -> Result<()> {
    if !lr.is_finite() || !grads.is_finite() || !params.is_finite() || !state.velocity.is_finite() {
        return Err(Error::invalid("non-finite input to sgd_step"));
    }
    if state.step >= state.total_steps {
        return Err(Error::invalid(format!(
            "sgd_step beyond schedule: step {} of {}",
            state.step, state.total_steps
        )));
    }
    for ((theta, g), v) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.velocity.iter_mut())
    {
        let g = g + config.weight_decay * *theta;
        *v = config.momentum * *v - lr * g;
        *theta += *v;
    }
    state.step += 1;
    Ok(())
}

/// Cosine annealing from `lr0` at `t = 0` to `lr_min` at `t = total`.
pub fn cosine_lr(t: usize, total: usize, lr0: f64, lr_min: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("cosine schedule needs at least one step"));
    }
    if t > total {
        return Err(Error::invalid(format!(
            "step {t} past schedule end {total}"
        )));
    }
    let progress = t as f64 / total as f64;
    Ok(lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (std::f64::consts::PI * progress).cos()))
}
