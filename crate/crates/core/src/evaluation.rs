//! Rank statistics and the test-set benchmark.
//!
//! SROCC is computed as the Pearson correlation of fractional ranks, which
//! stays well defined when scores tie.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datasets::{sha256_hex, Family, Manifest, PairLabel, Split};
use crate::error::{Error, Result};
use crate::imaging::{laplacian_variance, Image};
use crate::losses::Delta;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Ascending ranks starting at 1; tied values share the mean of their positions.
pub fn fractional_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot rank an empty vector"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot rank non-finite values"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end (0-based) average to (start + end + 1) / 2 in 1-based ranks.
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric(
            "correlation of a constant vector".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank-order correlation between predictions and ground truth.
pub fn srocc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} predictions vs {} ground-truth values",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "SROCC needs n >= 2, got {}",
            pred.len()
        )));
    }
    pearson(&fractional_ranks(pred)?, &fractional_ranks(truth)?)
}

/// Fraction of pairs whose score order agrees with the label; exact score ties count half.
pub fn pairwise_accuracy(scores: &BTreeMap<String, f64>, pairs: &[PairLabel]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("pairwise accuracy over an empty pair set"));
    }
    let lookup = |id: &String| {
        scores
            .get(id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no score for image `{id}`")))
    };
    let mut correct = 0.0;
    for p in pairs {
        let (s1, s2) = (lookup(&p.id1)?, lookup(&p.id2)?);
        correct += pair_credit(s1, s2, p.delta);
    }
    Ok(correct / pairs.len() as f64)
}

/// 1 if `(s1, s2)` is ordered as `delta` says, 0.5 on a tie, 0 otherwise.
pub fn pair_credit(s1: f64, s2: f64, delta: Delta) -> f64 {
    if s1 == s2 {
        0.5
    } else if (s1 < s2) == (delta == Delta::FirstBlurrier) {
        1.0
    } else {
        0.0
    }
}

/// Anything that maps an image to a sharpness-oriented score.
pub trait ImageScorer {
    /// Stable identity of the scorer; feeds the report's provenance hash.
    fn identity(&self) -> String;
    fn info(&self) -> ScorerInfo;
    fn score_image(&self, img: &Image) -> Result<f64>;
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScorerInfo {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_set: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Model-free reference scorer: variance of the Laplacian.
pub struct LaplacianVarianceScorer;

impl ImageScorer for LaplacianVarianceScorer {
    fn identity(&self) -> String {
        "laplacian_variance".into()
    }

    fn info(&self) -> ScorerInfo {
        ScorerInfo {
            name: "laplacian_variance".into(),
            ..Default::default()
        }
    }

    fn score_image(&self, img: &Image) -> Result<f64> {
        laplacian_variance(img)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: Split,
    pub family: Family,
    pub srocc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub srocc_error: Option<String>,
    pub pairwise_accuracy: f64,
    pub n_images: usize,
    pub n_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub scorer: ScorerInfo,
    pub scorer_hash: String,
    pub manifest_hash: String,
    pub provenance_hash: String,
    pub results: Vec<SplitResult>,
}

impl BenchmarkReport {
    pub fn result(&self, split: Split) -> Option<&SplitResult> {
        self.results.iter().find(|r| r.split == split)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Aligned console table, one row per split.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<15} {:>8} {:>9} {:>7} {:>7}",
            "split", "family", "SROCC", "pair-acc", "images", "pairs"
        );
        for r in &self.results {
            let srocc = r
                .srocc
                .map_or_else(|| "undef".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "{:<8} {:<15} {:>8} {:>9.4} {:>7} {:>7}",
                r.split.name(),
                r.family.name(),
                srocc,
                r.pairwise_accuracy,
                r.n_images,
                r.n_pairs
            );
        }
        out
    }
}

/// Scores every image of each requested test split and compares against
/// ground-truth blur (negated sigma, so higher means sharper) and the split's pair labels.
pub fn run_benchmark(
    scorer: &dyn ImageScorer,
    manifest: &Manifest,
    splits: &[Split],
) -> Result<BenchmarkReport> {
    for split in splits {
        if !manifest.has_split(*split) {
            return Err(Error::MissingSplit(split.name().into()));
        }
    }
    let mut results = Vec::with_capacity(splits.len());
    for &split in splits {
        let records: Vec<_> = manifest.images_in(split).collect();
        let mut scores = BTreeMap::new();
        let mut pred = Vec::with_capacity(records.len());
        let mut truth = Vec::with_capacity(records.len());
        for r in &records {
            let sigma = r.ground_truth_sigma.ok_or_else(|| {
                Error::Manifest(format!("test image `{}` has no ground-truth sigma", r.id))
            })?;
            let s = scorer.score_image(&manifest.load_image(r)?)?;
            scores.insert(r.id.clone(), s);
            pred.push(s);
            truth.push(-sigma);
        }
        let (srocc_value, srocc_error) = match srocc(&pred, &truth) {
            Ok(v) => (Some(v), None),
            Err(e @ Error::UndefinedMetric(_)) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        let pairs = manifest.pairs(split.name()).unwrap_or_default();
        let pairwise_accuracy = if pairs.is_empty() {
            0.5
        } else {
            pairwise_accuracy(&scores, pairs)?
        };
        results.push(SplitResult {
            split,
            family: records[0].family,
            srocc: srocc_value,
            srocc_error,
            pairwise_accuracy,
            n_images: records.len(),
            n_pairs: pairs.len(),
        });
    }
    let scorer_hash = sha256_hex(scorer.identity().as_bytes());
    let manifest_hash = sha256_hex(manifest.to_json()?.as_bytes());
    let provenance_hash = sha256_hex(format!("{scorer_hash}:{manifest_hash}").as_bytes());
    Ok(BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scorer: scorer.info(),
        scorer_hash,
        manifest_hash,
        provenance_hash,
        results,
    })
}
