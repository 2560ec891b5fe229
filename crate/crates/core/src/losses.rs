//! Ranking losses on scalar scores, each returning its value together with
//! the exact (sub)gradient with respect to every input score.
//!
//! Scores are sharpness-oriented. A pair label `delta = -1` means the first
//! image is the blurrier one, so the loss wants `y1 < y2`.
//!
//! At a hinge kink (argument exactly zero) the subgradient is taken as zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative rank of a pair: `FirstBlurrier` is `-1`, `SecondBlurrier` is `+1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Delta {
    FirstBlurrier,
    SecondBlurrier,
}

impl Delta {
    pub fn sign(self) -> f64 {
        match self {
            Delta::FirstBlurrier => -1.0,
            Delta::SecondBlurrier => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Delta::FirstBlurrier => Delta::SecondBlurrier,
            Delta::SecondBlurrier => Delta::FirstBlurrier,
        }
    }
}

impl TryFrom<i8> for Delta {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(Delta::FirstBlurrier),
            1 => Ok(Delta::SecondBlurrier),
            other => Err(Error::invalid(format!(
                "delta must be -1 or +1, got {other}"
            ))),
        }
    }
}

impl From<Delta> for i8 {
    fn from(d: Delta) -> i8 {
        match d {
            Delta::FirstBlurrier => -1,
            Delta::SecondBlurrier => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOutput<const N: usize> {
    pub value: f64,
    pub score_grads: [f64; N],
}

impl<const N: usize> LossOutput<N> {
    fn zero() -> Self {
        Self {
            value: 0.0,
            score_grads: [0.0; N],
        }
    }
}

fn check_margin(eps: f64) -> Result<()> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "margin must be finite and non-negative, got {eps}"
        )))
    }
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.iter().all(|s| s.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("non-finite score"))
    }
}

/// Hinge on a score gap: `max(0, (b - a) * sign + eps)`; grads on `(a, b)`.
fn hinge(a: f64, b: f64, sign: f64, eps: f64) -> LossOutput<2> {
    let arg = (b - a) * sign + eps;
    if arg > 0.0 {
        LossOutput {
            value: arg,
            score_grads: [-sign, sign],
        }
    } else {
        LossOutput::zero()
    }
}

/// Pairwise margin ranking loss `max(0, d * delta + eps)` with `d = -(y1 - y2)`.
pub fn pairwise_ranking_loss(y1: f64, y2: f64, delta: Delta, eps: f64) -> Result<LossOutput<2>> {
    check_margin(eps)?;
    check_scores(&[y1, y2])?;
    Ok(hinge(y1, y2, delta.sign(), eps))
}

/// Pseudo-label from the clean pair's scores, or `None` on an exact tie.
pub fn pseudo_label(y1: f64, y2: f64) -> Option<Delta> {
    if y1 < y2 {
        Some(Delta::FirstBlurrier)
    } else if y1 > y2 {
        Some(Delta::SecondBlurrier)
    } else {
        None
    }
}

/// Quadruplet ranking consistency: the degraded pair `(y1d, y2d)` must keep the
/// order the model assigns to the clean pair `(y1, y2)`, with margin `eps`.
///
/// The pseudo-label is a constant, so gradients are zero for `y1` and `y2`.
/// Returns `None` when the clean scores tie exactly (quadruplet skipped).
/// Gradient order: `[y1, y2, y1d, y2d]`.
pub fn qrc_loss(y1: f64, y2: f64, y1d: f64, y2d: f64, eps: f64) -> Result<Option<LossOutput<4>>> {
    check_margin(eps)?;
    check_scores(&[y1, y2, y1d, y2d])?;
    let Some(label) = pseudo_label(y1, y2) else {
        return Ok(None);
    };
    let inner = hinge(y1d, y2d, label.sign(), eps);
    Ok(Some(LossOutput {
        value: inner.value,
        score_grads: [0.0, 0.0, inner.score_grads[0], inner.score_grads[1]],
    }))
}

/// Clean-versus-degraded hinge `max(0, (yd - y) + eps)`; grads on `(y, yd)`.
pub fn pairwise_degradation_loss(y: f64, yd: f64, eps: f64) -> Result<LossOutput<2>> {
    check_margin(eps)?;
    check_scores(&[y, yd])?;
    // The degraded image is the blurrier one: a pair (degraded, clean) with delta = -1.
    let out = hinge(yd, y, -1.0, eps);
    Ok(LossOutput {
        value: out.value,
        score_grads: [out.score_grads[1], out.score_grads[0]],
    })
}

/// Log-sum-exp pairwise surrogate `ln(1 + exp(yd - y))`; grads on `(y, yd)`.
pub fn lsep_loss(y: f64, yd: f64) -> Result<LossOutput<2>> {
    check_scores(&[y, yd])?;
    let x = yd - y;
    let value = softplus(x);
    let s = logistic(x);
    Ok(LossOutput {
        value,
        score_grads: [-s, s],
    })
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
