//! Semi-supervised training loop.
//!
//! Every step combines a supervised batch of labeled pairs under the margin
//! ranking loss with an optional self-supervised batch built from unlabeled
//! images. Both branches read one parameter set and a single SGD update is
//! applied from the summed gradients.
//!
//! Randomness is split into independent streams (initialization, labeled
//! batch order, unlabeled image sampling, degradation sigma) so that turning
//! one branch off never changes what the other one sees.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::datasets::{
    derive_seed, make_quadruplet, pair_sets, Manifest, PairLabel, Split, DEFAULT_DEGRADATION_RANGE,
};
use crate::error::{Error, Result};
use crate::evaluation::pair_credit;
use crate::features::{extract_features, FeatureNormalizer, FeatureVector};
use crate::imaging::{prepare_input, Image};
use crate::losses::{lsep_loss, pairwise_degradation_loss, pairwise_ranking_loss, qrc_loss, Delta};
use crate::scorer::{
    accumulate_backward, cosine_lr, forward, score, sgd_step, OptState, ScorerParams, SgdConfig,
};

const STREAM_INIT: u64 = 0;
const STREAM_LABELED: u64 = 1;
const STREAM_UNLABELED: u64 = 2;
const STREAM_SIGMA: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Labeled pairs only.
    Baseline,
    /// Quadruplet ranking consistency on unlabeled images.
    Qrc,
    /// Degraded copy must score below its clean original (hinge).
    Rankiqa,
    /// As `Rankiqa` with a softplus surrogate.
    Lsep,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::Qrc, Mode::Rankiqa, Mode::Lsep];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Qrc => "qrc",
            Mode::Rankiqa => "rankiqa",
            Mode::Lsep => "lsep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which labeled pair set to train on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSet {
    Full,
    Half,
}

impl LabelSet {
    pub fn name(self) -> &'static str {
        match self {
            LabelSet::Full => "full",
            LabelSet::Half => "half",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(LabelSet::Full),
            "half" => Ok(LabelSet::Half),
            other => Err(Error::Config(format!("unknown label set `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size_pairs: usize,
    pub batch_size_quadruplets: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub eps_ranking: f64,
    pub eps_qrc: f64,
    pub lambda_qrc: f64,
    pub sigma_d_range: [f64; 2],
    pub label_set: LabelSet,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Qrc,
            seed: 0,
            epochs: 30,
            batch_size_pairs: 30,
            batch_size_quadruplets: 15,
            lr0: 0.001,
            lr_min: 0.0,
            momentum: 0.9,
            weight_decay: 0.0005,
            eps_ranking: 0.05,
            eps_qrc: 0.05,
            lambda_qrc: 1.0,
            sigma_d_range: DEFAULT_DEGRADATION_RANGE,
            label_set: LabelSet::Full,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size_pairs == 0 || self.batch_size_quadruplets == 0 {
            return bad("batch sizes must be at least 1");
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad("lr0 must be positive");
        }
        if !(self.lr_min.is_finite() && (0.0..=self.lr0).contains(&self.lr_min)) {
            return bad("lr_min must lie in [0, lr0]");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("eps_ranking", self.eps_ranking),
            ("eps_qrc", self.eps_qrc),
            ("lambda_qrc", self.lambda_qrc),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and nonnegative"
                )));
            }
        }
        let [lo, hi] = self.sigma_d_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo) {
            return bad("sigma_d_range must satisfy 0 <= lo <= hi");
        }
        Ok(())
    }

    /// SHA-256 of the config's canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(crate::datasets::sha256_hex(
            serde_json::to_string(self)?.as_bytes(),
        ))
    }

    fn sgd(&self) -> SgdConfig {
        SgdConfig {
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

/// A labeled pair resolved to indices into [`TrainingData`]'s labeled pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexedPair {
    pub first: usize,
    pub second: usize,
    pub delta: Delta,
}

/// Everything the loop needs, with clean-image features extracted up front.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub input_size: (usize, usize),
    pub labeled_ids: Vec<String>,
    pub labeled_features: Vec<FeatureVector>,
    pub train_pairs: Vec<IndexedPair>,
    pub half_pairs: Vec<IndexedPair>,
    pub val_pairs: Vec<IndexedPair>,
    pub unlabeled: Vec<Image>,
    pub unlabeled_features: Vec<FeatureVector>,
}

impl TrainingData {
    /// Reads the `train_labeled` and `unlabeled` splits and the `train`,
    /// `train_half` and `val` pair sets.
    pub fn from_manifest(manifest: &Manifest) -> Result<Self> {
        let labeled: Vec<(String, Image)> = manifest
            .images_in(Split::TrainLabeled)
            .map(|r| Ok((r.id.clone(), manifest.load_image(r)?)))
            .collect::<Result<_>>()?;
        let unlabeled: Vec<Image> = manifest
            .images_in(Split::Unlabeled)
            .map(|r| manifest.load_image(r))
            .collect::<Result<_>>()?;
        let set = |name: &str| manifest.pairs(name).unwrap_or_default();
        let train = set(pair_sets::TRAIN);
        if train.is_empty() {
            return Err(Error::invalid("manifest has no `train` pairs"));
        }
        Self::from_parts(
            labeled,
            train,
            set(pair_sets::TRAIN_HALF),
            set(pair_sets::VAL),
            unlabeled,
        )
    }

    /// Builds training data from in-memory images. Every image is brought to
    /// the size of the first labeled image.
    pub fn from_parts(
        labeled: Vec<(String, Image)>,
        train: &[PairLabel],
        half: &[PairLabel],
        val: &[PairLabel],
        unlabeled: Vec<Image>,
    ) -> Result<Self> {
        let first = labeled
            .first()
            .ok_or_else(|| Error::invalid("labeled split is empty"))?;
        let size = (first.1.width(), first.1.height());
        let fit = |img: &Image| -> Result<FeatureVector> {
            if (img.width(), img.height()) == size {
                extract_features(img)
            } else {
                extract_features(&prepare_input(img, size.0, size.1)?)
            }
        };
        let labeled_features = labeled
            .iter()
            .map(|(_, img)| fit(img))
            .collect::<Result<Vec<_>>>()?;
        let labeled_ids: Vec<String> = labeled.into_iter().map(|(id, _)| id).collect();
        let unlabeled = unlabeled
            .into_iter()
            .map(|img| {
                if (img.width(), img.height()) == size {
                    Ok(img)
                } else {
                    prepare_input(&img, size.0, size.1)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let unlabeled_features = unlabeled
            .iter()
            .map(extract_features)
            .collect::<Result<Vec<_>>>()?;

        let resolve = |pairs: &[PairLabel]| -> Result<Vec<IndexedPair>> {
            pairs
                .iter()
                .map(|p| {
                    let find = |id: &str| {
                        labeled_ids.iter().position(|x| x == id).ok_or_else(|| {
                            Error::invalid(format!(
                                "pair references unlabeled or unknown image `{id}`"
                            ))
                        })
                    };
                    Ok(IndexedPair {
                        first: find(&p.id1)?,
                        second: find(&p.id2)?,
                        delta: p.delta,
                    })
                })
                .collect()
        };
        let data = Self {
            input_size: size,
            train_pairs: resolve(train)?,
            half_pairs: resolve(half)?,
            val_pairs: resolve(val)?,
            labeled_ids,
            labeled_features,
            unlabeled,
            unlabeled_features,
        };
        data.check_split_hygiene()?;
        Ok(data)
    }

    fn check_split_hygiene(&self) -> Result<()> {
        let key = |p: &IndexedPair| (p.first.min(p.second), p.first.max(p.second));
        let train: BTreeSet<_> = self
            .train_pairs
            .iter()
            .chain(&self.half_pairs)
            .map(key)
            .collect();
        if let Some(p) = self.val_pairs.iter().find(|p| train.contains(&key(p))) {
            return Err(Error::invalid(format!(
                "validation pair ({}, {}) also appears in training pairs",
                self.labeled_ids[p.first], self.labeled_ids[p.second]
            )));
        }
        Ok(())
    }

    pub fn pairs(&self, set: LabelSet) -> &[IndexedPair] {
        match set {
            LabelSet::Full => &self.train_pairs,
            LabelSet::Half => &self.half_pairs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub supervised_loss: f64,
    pub self_supervised_loss: f64,
    pub total_loss: f64,
    /// Pairwise accuracy on the held-out pairs; absent without a validation set.
    pub val_pairwise_accuracy: Option<f64>,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub final_checkpoint: Checkpoint,
    /// Checkpoint from the epoch with the highest validation accuracy.
    pub best_checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// History as line-delimited JSON.
    pub fn history_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.history {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

struct StepLoss {
    value: f64,
    grads: ScorerParams,
    dump: Vec<String>,
}

pub fn train(config: &TrainConfig, data: &TrainingData) -> Result<TrainOutcome> {
    train_with_progress(config, data, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with_progress(
    config: &TrainConfig,
    data: &TrainingData,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let pairs = data.pairs(config.label_set);
    if pairs.is_empty() {
        return Err(Error::invalid(format!(
            "no `{}` training pairs",
            config.label_set.name()
        )));
    }
    if config.mode != Mode::Baseline && data.unlabeled.len() < 2 {
        return Err(Error::invalid(format!(
            "mode `{}` needs at least 2 unlabeled images, got {}",
            config.mode,
            data.unlabeled.len()
        )));
    }

    let normalizer = FeatureNormalizer::fit(&data.labeled_features)?;
    let labeled: Vec<FeatureVector> = data
        .labeled_features
        .iter()
        .map(|f| normalizer.normalize(f))
        .collect();
    let unlabeled: Vec<FeatureVector> = data
        .unlabeled_features
        .iter()
        .map(|f| normalizer.normalize(f))
        .collect();

    let rng = |stream| ChaCha8Rng::seed_from_u64(derive_seed(config.seed, stream));
    let mut params = ScorerParams::init(derive_seed(config.seed, STREAM_INIT));
    let mut labeled_rng = rng(STREAM_LABELED);
    let mut unlabeled_rng = rng(STREAM_UNLABELED);
    let mut sigma_rng = rng(STREAM_SIGMA);

    let steps_per_epoch = pairs.len().div_ceil(config.batch_size_pairs);
    let mut opt = OptState::new(config.epochs * steps_per_epoch);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ScorerParams)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut labeled_rng);
        let epoch_lr = cosine_lr(opt.step, opt.total_steps, config.lr0, config.lr_min)?;
        let (mut sup_sum, mut self_sum) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size_pairs) {
            let lr = cosine_lr(opt.step, opt.total_steps, config.lr0, config.lr_min)?;
            let batch: Vec<IndexedPair> = batch.iter().map(|&i| pairs[i]).collect();
            let sup = supervised_loss(&params, &labeled, &batch, config.eps_ranking)?;
            let unsup = match config.mode {
                Mode::Baseline => None,
                mode => Some(self_supervised_loss(
                    mode,
                    &params,
                    data,
                    &normalizer,
                    &unlabeled,
                    config,
                    &mut unlabeled_rng,
                    &mut sigma_rng,
                )?),
            };
            let self_value = unsup.as_ref().map_or(0.0, |s| s.value);
            let total = sup.value + config.lambda_qrc * self_value;
            if !total.is_finite() {
                let mut dump = sup.dump;
                dump.extend(unsup.map(|s| s.dump).unwrap_or_default());
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: opt.step,
                    dump: dump.join("; "),
                });
            }
            let mut grads = sup.grads;
            if let Some(s) = &unsup {
                if config.lambda_qrc != 0.0 {
                    grads.add_scaled(&s.grads, config.lambda_qrc);
                }
            }
            sgd_step(&mut params, &grads, &mut opt, lr, config.sgd())?;
            sup_sum += sup.value;
            self_sum += self_value;
        }
        let steps = steps_per_epoch as f64;
        let val = if data.val_pairs.is_empty() {
            None
        } else {
            Some(accuracy_on(&params, &labeled, &data.val_pairs)?)
        };
        let record = EpochRecord {
            epoch,
            supervised_loss: sup_sum / steps,
            self_supervised_loss: self_sum / steps,
            total_loss: (sup_sum + config.lambda_qrc * self_sum) / steps,
            val_pairwise_accuracy: val,
            lr: epoch_lr,
        };
        on_epoch(&record);
        history.push(record);
        if let Some(acc) = val {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, params.clone()));
            }
        }
    }

    let final_checkpoint = Checkpoint::new(
        params,
        normalizer.clone(),
        config.clone(),
        data.input_size,
        config.epochs,
    )?;
    let best_checkpoint = match best {
        Some((_, epoch, p)) => {
            Checkpoint::new(p, normalizer, config.clone(), data.input_size, epoch)?
        }
        None => final_checkpoint.clone(),
    };
    Ok(TrainOutcome {
        final_checkpoint,
        best_checkpoint,
        history,
    })
}

fn supervised_loss(
    params: &ScorerParams,
    features: &[FeatureVector],
    batch: &[IndexedPair],
    eps: f64,
) -> Result<StepLoss> {
    let n = batch.len() as f64;
    let mut grads = ScorerParams::zeros();
    let mut value = 0.0;
    let mut dump = Vec::new();
    for p in batch {
        let (s1, c1) = forward(params, &features[p.first])?;
        let (s2, c2) = forward(params, &features[p.second])?;
        let out = pairwise_ranking_loss(s1.value(), s2.value(), p.delta, eps)?;
        value += out.value / n;
        accumulate_backward(params, &c1, out.score_grads[0] / n, &mut grads);
        accumulate_backward(params, &c2, out.score_grads[1] / n, &mut grads);
        if !out.value.is_finite() {
            dump.push(format!(
                "pair ({}, {}) scores ({}, {}) loss {}",
                p.first,
                p.second,
                s1.value(),
                s2.value(),
                out.value
            ));
        }
    }
    Ok(StepLoss { value, grads, dump })
}

#[allow(clippy::too_many_arguments)]
fn self_supervised_loss(
    mode: Mode,
    params: &ScorerParams,
    data: &TrainingData,
    normalizer: &FeatureNormalizer,
    clean: &[FeatureVector],
    config: &TrainConfig,
    unlabeled_rng: &mut ChaCha8Rng,
    sigma_rng: &mut ChaCha8Rng,
) -> Result<StepLoss> {
    let m = config.batch_size_quadruplets;
    let n_pool = data.unlabeled.len();
    let terms = match mode {
        Mode::Qrc => m as f64,
        _ => 2.0 * m as f64,
    };
    let mut grads = ScorerParams::zeros();
    let mut value = 0.0;
    let mut dump = Vec::new();
    for _ in 0..m {
        let i = unlabeled_rng.gen_range(0..n_pool);
        let mut j = unlabeled_rng.gen_range(0..n_pool - 1);
        if j >= i {
            j += 1;
        }
        let q = make_quadruplet(
            &data.unlabeled[i],
            &data.unlabeled[j],
            config.sigma_d_range,
            sigma_rng,
        )?;
        let f1d = normalizer.normalize(&extract_features(&q.x1d)?);
        let f2d = normalizer.normalize(&extract_features(&q.x2d)?);
        let (y1d, c1d) = forward(params, &f1d)?;
        let (y2d, c2d) = forward(params, &f2d)?;
        let mut quad_value = 0.0;
        match mode {
            Mode::Qrc => {
                // The pseudo-label comes from the clean pair and carries no gradient.
                let y1 = score(params, &clean[i])?.value();
                let y2 = score(params, &clean[j])?.value();
                if let Some(out) = qrc_loss(y1, y2, y1d.value(), y2d.value(), config.eps_qrc)? {
                    quad_value = out.value;
                    accumulate_backward(params, &c1d, out.score_grads[2] / terms, &mut grads);
                    accumulate_backward(params, &c2d, out.score_grads[3] / terms, &mut grads);
                }
            }
            Mode::Rankiqa | Mode::Lsep => {
                for (k, (yd, cd)) in [(i, (y1d, &c1d)), (j, (y2d, &c2d))] {
                    let (y, c) = forward(params, &clean[k])?;
                    let out = if mode == Mode::Rankiqa {
                        pairwise_degradation_loss(y.value(), yd.value(), config.eps_qrc)?
                    } else {
                        lsep_loss(y.value(), yd.value())?
                    };
                    quad_value += out.value;
                    accumulate_backward(params, &c, out.score_grads[0] / terms, &mut grads);
                    accumulate_backward(params, cd, out.score_grads[1] / terms, &mut grads);
                }
            }
            Mode::Baseline => unreachable!("baseline has no self-supervised branch"),
        }
        value += quad_value / terms;
        if !quad_value.is_finite() {
            dump.push(format!(
                "quadruplet ({i}, {j}) sigma_d {} degraded scores ({}, {})",
                q.sigma_d,
                y1d.value(),
                y2d.value()
            ));
        }
    }
    Ok(StepLoss { value, grads, dump })
}

fn accuracy_on(
    params: &ScorerParams,
    normalized: &[FeatureVector],
    pairs: &[IndexedPair],
) -> Result<f64> {
    let scores = normalized
        .iter()
        .map(|f| Ok(score(params, f)?.value()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(indexed_accuracy(&scores, pairs))
}

fn indexed_accuracy(scores: &[f64], pairs: &[IndexedPair]) -> f64 {
    let credit: f64 = pairs
        .iter()
        .map(|p| pair_credit(scores[p.first], scores[p.second], p.delta))
        .sum();
    credit / pairs.len() as f64
}

/// Pairwise accuracy of a checkpoint on the held-out validation pairs.
pub fn validate(checkpoint: &Checkpoint, data: &TrainingData) -> Result<f64> {
    if data.val_pairs.is_empty() {
        return Err(Error::invalid("validation pair set is empty"));
    }
    let scores = data
        .labeled_features
        .iter()
        .map(|f| checkpoint.score_features(f))
        .collect::<Result<Vec<f64>>>()?;
    Ok(indexed_accuracy(&scores, &data.val_pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_synthetic_images, sample_pairs, Family, SyntheticSpec};
    use crate::features::FeatureNormalizer;

    fn toy_data(seed: u64, n_labeled: usize, n_pairs: usize, n_val: usize) -> TrainingData {
        let spec = |family, count, seed| SyntheticSpec {
            family,
            base_count: count,
            instances_per_base: 1,
            sigma_range: [0.0, 3.0],
            width: 32,
            height: 32,
            seed,
            label_noise_prob: 0.0,
        };
        let lab = generate_synthetic_images(&spec(Family::GradientBlobs, n_labeled, seed)).unwrap();
        let unl = generate_synthetic_images(&spec(Family::Geometric, 12, seed + 1)).unwrap();
        let ids: Vec<String> = (0..n_labeled).map(|i| format!("l{i:03}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels = Vec::new();
        for (a, b) in sample_pairs(n_labeled, n_pairs + n_val, &mut rng).unwrap() {
            let d = if lab[a].sigma > lab[b].sigma {
                Delta::FirstBlurrier
            } else {
                Delta::SecondBlurrier
            };
            labels.push(PairLabel::canonical(ids[a].as_str(), ids[b].as_str(), d).unwrap());
        }
        let val = labels.split_off(n_pairs);
        let half = labels[..n_pairs / 2].to_vec();
        TrainingData::from_parts(
            ids.into_iter()
                .zip(lab.into_iter().map(|s| s.image))
                .collect(),
            &labels,
            &half,
            &val,
            unl.into_iter().map(|s| s.image).collect(),
        )
        .unwrap()
    }

    fn quick(mode: Mode, seed: u64) -> TrainConfig {
        TrainConfig {
            mode,
            seed,
            epochs: 3,
            batch_size_pairs: 10,
            batch_size_quadruplets: 4,
            lr0: 0.05,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_defaults_and_toml() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size_pairs, c.batch_size_quadruplets), (30, 15));
        assert_eq!(
            (c.lr0, c.lr_min, c.momentum, c.weight_decay),
            (0.001, 0.0, 0.9, 0.0005)
        );
        assert_eq!((c.eps_ranking, c.eps_qrc, c.lambda_qrc), (0.05, 0.05, 1.0));
        assert_eq!(c.sigma_d_range, [0.5, 3.0]);

        let parsed =
            TrainConfig::from_toml("mode = \"rankiqa\"\nepochs = 4\nlabel_set = \"half\"\n")
                .unwrap();
        assert_eq!(
            (parsed.mode, parsed.epochs, parsed.label_set),
            (Mode::Rankiqa, 4, LabelSet::Half)
        );
        assert_eq!(
            TrainConfig::from_toml(&parsed.to_toml().unwrap()).unwrap(),
            parsed
        );
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
        assert!(TrainConfig::from_toml("epochs = 0").is_err());
        assert!(TrainConfig::from_toml("sigma_d_range = [2.0, 1.0]").is_err());
        assert_ne!(c.hash().unwrap(), parsed.hash().unwrap());
    }

    #[test]
    fn one_step_moves_scores_apart() {
        let base = toy_data(4, 6, 1, 0);
        let config = TrainConfig {
            mode: Mode::Baseline,
            epochs: 1,
            lr0: 0.01,
            weight_decay: 0.0,
            eps_ranking: 0.05,
            ..TrainConfig::default()
        };
        let norm = FeatureNormalizer::fit(&base.labeled_features).unwrap();
        let init = ScorerParams::init(derive_seed(config.seed, STREAM_INIT));
        let y = |params: &ScorerParams, k: usize| {
            score(params, &norm.normalize(&base.labeled_features[k]))
                .unwrap()
                .value()
        };
        // Label the image the untrained model prefers as blurrier, so the hinge is active.
        let (blurrier, sharper) = if y(&init, 0) > y(&init, 1) {
            (0, 1)
        } else {
            (1, 0)
        };
        let data = TrainingData {
            train_pairs: vec![IndexedPair {
                first: blurrier,
                second: sharper,
                delta: Delta::FirstBlurrier,
            }],
            ..base.clone()
        };
        let out = train(&config, &data).unwrap();
        let trained = &out.final_checkpoint.params;
        assert!(y(trained, sharper) > y(&init, sharper));
        assert!(y(trained, blurrier) < y(&init, blurrier));
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_data(1, 16, 30, 10);
        for mode in Mode::ALL {
            let a = train(&quick(mode, 7), &data).unwrap();
            let b = train(&quick(mode, 7), &data).unwrap();
            assert_eq!(
                a.final_checkpoint.to_json().unwrap(),
                b.final_checkpoint.to_json().unwrap()
            );
            assert_eq!(a.history, b.history);
            let c = train(&quick(mode, 8), &data).unwrap();
            assert_ne!(a.final_checkpoint.params, c.final_checkpoint.params);
        }
    }

    #[test]
    fn baseline_history_has_no_self_loss() {
        let data = toy_data(2, 16, 30, 10);
        let out = train(&quick(Mode::Baseline, 1), &data).unwrap();
        assert_eq!(out.history.len(), 3);
        assert!(out.history.iter().all(|r| r.self_supervised_loss == 0.0));
        assert!(out.history.iter().all(|r| r.supervised_loss >= 0.0));
        let qrc = train(&quick(Mode::Qrc, 1), &data).unwrap();
        assert!(qrc.history.iter().any(|r| r.self_supervised_loss > 0.0));
    }

    #[test]
    fn zero_lambda_qrc_matches_baseline_bitwise() {
        let data = toy_data(3, 16, 30, 10);
        let base = train(&quick(Mode::Baseline, 5), &data).unwrap();
        let qrc = train(
            &TrainConfig {
                lambda_qrc: 0.0,
                ..quick(Mode::Qrc, 5)
            },
            &data,
        )
        .unwrap();
        assert_eq!(base.final_checkpoint.params, qrc.final_checkpoint.params);
        assert_eq!(
            base.final_checkpoint.normalizer,
            qrc.final_checkpoint.normalizer
        );
        let accs = |o: &TrainOutcome| {
            o.history
                .iter()
                .map(|r| r.val_pairwise_accuracy)
                .collect::<Vec<_>>()
        };
        assert_eq!(accs(&base), accs(&qrc));
    }

    #[test]
    fn best_checkpoint_has_best_validation_accuracy() {
        let data = toy_data(5, 20, 40, 20);
        let out = train(
            &TrainConfig {
                epochs: 5,
                ..quick(Mode::Qrc, 2)
            },
            &data,
        )
        .unwrap();
        let best_acc = out
            .history
            .iter()
            .filter_map(|r| r.val_pairwise_accuracy)
            .fold(f64::MIN, f64::max);
        assert_eq!(validate(&out.best_checkpoint, &data).unwrap(), best_acc);
        let last = out.history.last().unwrap().val_pairwise_accuracy.unwrap();
        assert_eq!(validate(&out.final_checkpoint, &data).unwrap(), last);
        assert_eq!(out.history_jsonl().unwrap().lines().count(), 5);
    }

    #[test]
    fn rejects_leaky_or_missing_splits() {
        let data = toy_data(6, 10, 10, 0);
        let labeled: Vec<(String, Image)> = data
            .labeled_ids
            .iter()
            .map(|id| (id.clone(), Image::constant(16, 16, 0.5).unwrap()))
            .collect();
        let pair = PairLabel::canonical("l000", "l001", Delta::FirstBlurrier).unwrap();
        let err = TrainingData::from_parts(
            labeled.clone(),
            &[pair.clone()],
            &[],
            &[pair.clone()],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("also appears"));

        let no_unlabeled = TrainingData::from_parts(labeled, &[pair], &[], &[], vec![]).unwrap();
        assert!(train(&quick(Mode::Qrc, 0), &no_unlabeled).is_err());
        assert!(train(&quick(Mode::Baseline, 0), &no_unlabeled).is_ok());
        assert!(train(
            &TrainConfig {
                label_set: LabelSet::Half,
                ..quick(Mode::Baseline, 0)
            },
            &no_unlabeled
        )
        .is_err());
    }

    #[test]
    fn untrained_model_is_near_chance() {
        // Balanced labels: each pair's orientation is drawn independently of the images.
        let features: Vec<FeatureVector> = {
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            (0..200)
                .map(|_| FeatureVector(std::array::from_fn(|_| rng.gen_range(-2.0..2.0))))
                .collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs: Vec<IndexedPair> = sample_pairs(200, 500, &mut rng)
            .unwrap()
            .into_iter()
            .map(|(a, b)| IndexedPair {
                first: a,
                second: b,
                delta: if rng.gen_bool(0.5) {
                    Delta::FirstBlurrier
                } else {
                    Delta::SecondBlurrier
                },
            })
            .collect();
        let acc = accuracy_on(&ScorerParams::init(12), &features, &pairs).unwrap();
        assert!((0.4..=0.6).contains(&acc), "{acc}");
        let oracle: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let perfect: Vec<IndexedPair> = pairs
            .iter()
            .map(|p| IndexedPair {
                delta: if p.first < p.second {
                    Delta::FirstBlurrier
                } else {
                    Delta::SecondBlurrier
                },
                ..*p
            })
            .collect();
        assert_eq!(indexed_accuracy(&oracle, &perfect), 1.0);
    }
}
