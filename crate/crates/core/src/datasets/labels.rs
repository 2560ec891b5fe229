//! Pair labels, annotator judgments, majority voting and pair sampling.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::Delta;

/// A labeled pair, stored canonically with `id1 < id2`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairLabel {
    pub id1: String,
    pub id2: String,
    pub delta: Delta,
}

impl PairLabel {
    /// Orders the ids, flipping `delta` when they are swapped.
    pub fn canonical(a: impl Into<String>, b: impl Into<String>, delta: Delta) -> Result<Self> {
        let (a, b) = (a.into(), b.into());
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(Self {
                id1: a,
                id2: b,
                delta,
            }),
            std::cmp::Ordering::Greater => Ok(Self {
                id1: b,
                id2: a,
                delta: delta.flipped(),
            }),
            std::cmp::Ordering::Equal => {
                Err(Error::invalid(format!("pair references `{a}` twice")))
            }
        }
    }

    /// Id of the image this label says is blurrier.
    pub fn blurrier(&self) -> &str {
        match self.delta {
            Delta::FirstBlurrier => &self.id1,
            Delta::SecondBlurrier => &self.id2,
        }
    }
}

/// One annotator's answer about a pair, in canonical first/second terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    FirstBlurrier,
    SecondBlurrier,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub pair_id: u32,
    pub annotator_id: String,
    pub choice: Choice,
    pub timestamp_ms: u64,
}

/// Strict-majority vote over all judgments collected for one pair.
///
/// A side wins only with more than half of every judgment, skips included.
/// `None` means the pair is excluded.
pub fn majority_vote(choices: &[Choice]) -> Option<Delta> {
    let total = choices.len();
    let first = choices
        .iter()
        .filter(|c| **c == Choice::FirstBlurrier)
        .count();
    let second = choices
        .iter()
        .filter(|c| **c == Choice::SecondBlurrier)
        .count();
    if 2 * first > total {
        Some(Delta::FirstBlurrier)
    } else if 2 * second > total {
        Some(Delta::SecondBlurrier)
    } else {
        None
    }
}

/// Effective judgments keyed by `(pair, annotator)`; a resubmission replaces the earlier one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JudgmentSet {
    by_pair: BTreeMap<u32, BTreeMap<String, Choice>>,
}

impl JudgmentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, j: &Judgment) {
        self.by_pair
            .entry(j.pair_id)
            .or_default()
            .insert(j.annotator_id.clone(), j.choice);
    }

    pub fn choices(&self, pair_id: u32) -> Vec<Choice> {
        self.by_pair
            .get(&pair_id)
            .map(|m| m.values().copied().collect())
            .unwrap_or_default()
    }

    pub fn count(&self, pair_id: u32) -> usize {
        self.by_pair.get(&pair_id).map_or(0, |m| m.len())
    }

    pub fn has(&self, pair_id: u32, annotator: &str) -> bool {
        self.by_pair
            .get(&pair_id)
            .is_some_and(|m| m.contains_key(annotator))
    }

    pub fn vote(&self, pair_id: u32) -> Option<Delta> {
        majority_vote(&self.choices(pair_id))
    }

    /// Number of effective judgments per annotator.
    pub fn per_annotator(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for m in self.by_pair.values() {
            for a in m.keys() {
                *out.entry(a.clone()).or_insert(0) += 1;
            }
        }
        out
    }
}

/// Label from ground-truth blur: the larger sigma is blurrier. Flipped with
/// probability `noise_prob`. Equal sigmas give no label.
pub fn derive_oracle_label(
    sigma1: f64,
    sigma2: f64,
    noise_prob: f64,
    rng: &mut impl Rng,
) -> Option<Delta> {
    if sigma1 == sigma2 {
        return None;
    }
    let clean = if sigma1 > sigma2 {
        Delta::FirstBlurrier
    } else {
        Delta::SecondBlurrier
    };
    if noise_prob > 0.0 && rng.gen_bool(noise_prob) {
        Some(clean.flipped())
    } else {
        Some(clean)
    }
}

/// Uniform sample without replacement over unordered index pairs `(i, j)`, `i < j`.
pub fn sample_pairs(
    n_items: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    if n_items < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 items to form pairs, got {n_items}"
        )));
    }
    if count == 0 {
        return Err(Error::invalid("pair count must be at least 1"));
    }
    let available = n_items * (n_items - 1) / 2;
    if count > available {
        return Err(Error::invalid(format!(
            "requested {count} pairs but only {available} distinct pairs exist among {n_items} items"
        )));
    }
    Ok(index::sample(rng, available, count)
        .into_iter()
        .map(|k| unrank_pair(k, n_items))
        .collect())
}

// Maps a linear index to the k-th pair in row-major order of the strict upper triangle.
fn unrank_pair(mut k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
        i += 1;
    }
}

/// Every unordered pair, in row-major order.
pub fn all_pairs(n_items: usize) -> Vec<(usize, usize)> {
    (0..n_items)
        .flat_map(|i| (i + 1..n_items).map(move |j| (i, j)))
        .collect()
}
