//! Whole-corpus generation: image groups per split, oracle-labeled training
//! pairs, a held-out validation set, a half-size label subset, and complete
//! pair sets for every test split.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::{all_pairs, derive_oracle_label, sample_pairs, PairLabel};
use super::manifest::{
    pair_sets, ImageRecord, ImageStore, Manifest, Provenance, Split, MANIFEST_FILE,
};
use super::synthetic::{generate_synthetic_images, Family, SyntheticSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub split: Split,
    pub family: Family,
    pub count: usize,
    pub sigma_range: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusPlan {
    pub seed: u64,
    pub image_size: usize,
    pub label_noise_prob: f64,
    pub train_pairs: usize,
    pub half_pairs: usize,
    pub val_pairs: usize,
    pub groups: Vec<GroupPlan>,
}

impl CorpusPlan {
    /// Desk-scale corpus: a 600-image labeled pool with 1,000 pairs (500 in the
    /// half subset), 2,000 unlabeled images, and three 100-image test sets.
    pub fn fib_desk(seed: u64) -> Self {
        let group = |split, family, count| GroupPlan {
            split,
            family,
            count,
            sigma_range: [0.0, 3.0],
        };
        Self {
            seed,
            image_size: 96,
            label_noise_prob: 0.0,
            train_pairs: 1000,
            half_pairs: 500,
            val_pairs: 200,
            groups: vec![
                group(Split::TrainLabeled, Family::GradientBlobs, 600),
                group(Split::Unlabeled, Family::Geometric, 2000),
                group(Split::Test1, Family::GradientBlobs, 100),
                group(Split::Test2, Family::Geometric, 100),
                group(Split::Test3, Family::NoiseTexture, 100),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_pairs > self.train_pairs {
            return Err(Error::Config("half_pairs exceeds train_pairs".into()));
        }
        if !(0.0..0.5).contains(&self.label_noise_prob) {
            return Err(Error::Config(
                "label_noise_prob must lie in [0, 0.5)".into(),
            ));
        }
        let labeled = self
            .groups
            .iter()
            .filter(|g| g.split == Split::TrainLabeled)
            .count();
        if labeled != 1 && self.train_pairs + self.val_pairs > 0 {
            return Err(Error::Config(
                "exactly one train_labeled group is required for training pairs".into(),
            ));
        }
        Ok(())
    }
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates all images into `out_dir` and writes `manifest.json` there.
pub fn build_corpus(plan: &CorpusPlan, out_dir: &Path) -> Result<Manifest> {
    plan.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let store = ImageStore::new(out_dir);
    let mut manifest = Manifest::new(
        out_dir,
        Provenance {
            generator: concat!("blurrank ", env!("CARGO_PKG_VERSION")).to_string(),
            seed: plan.seed,
            config: serde_json::to_value(plan)?,
        },
    );

    for (g, group) in plan.groups.iter().enumerate() {
        let spec = SyntheticSpec {
            family: group.family,
            base_count: group.count,
            instances_per_base: 1,
            sigma_range: group.sigma_range,
            width: plan.image_size,
            height: plan.image_size,
            seed: derive_seed(plan.seed, g as u64),
            label_noise_prob: plan.label_noise_prob,
        };
        let images = generate_synthetic_images(&spec)?;
        let start = manifest.images_in(group.split).count();
        for (i, img) in images.iter().enumerate() {
            manifest.images.push(ImageRecord {
                id: format!("{}-{:05}", group.split.name(), start + i),
                path: store.put(&img.image)?,
                split: group.split,
                family: group.family,
                ground_truth_sigma: Some(img.sigma),
            });
        }
    }

    let sigma_of = |r: &ImageRecord| r.ground_truth_sigma.expect("synthetic images carry sigma");

    if plan.train_pairs + plan.val_pairs > 0 {
        let pool: Vec<&ImageRecord> = manifest.images_in(Split::TrainLabeled).collect();
        let mut pair_rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, 1000));
        let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, 1001));
        let mut labeled = Vec::new();
        let wanted = plan.train_pairs + plan.val_pairs;
        for (i, j) in sample_pairs(pool.len(), wanted, &mut pair_rng)? {
            let (a, b) = (pool[i], pool[j]);
            if let Some(delta) = derive_oracle_label(
                sigma_of(a),
                sigma_of(b),
                plan.label_noise_prob,
                &mut noise_rng,
            ) {
                labeled.push(PairLabel::canonical(a.id.as_str(), b.id.as_str(), delta)?);
            }
        }
        if labeled.len() < wanted {
            return Err(Error::Config(format!(
                "only {} labelable pairs (ties in sigma), wanted {wanted}",
                labeled.len()
            )));
        }
        let val = labeled.split_off(plan.train_pairs);
        let half = labeled[..plan.half_pairs].to_vec();
        manifest.pair_sets.insert(pair_sets::TRAIN.into(), labeled);
        manifest
            .pair_sets
            .insert(pair_sets::TRAIN_HALF.into(), half);
        manifest.pair_sets.insert(pair_sets::VAL.into(), val);
    }

    for split in Split::TESTS {
        let pool: Vec<&ImageRecord> = manifest.images_in(split).collect();
        if pool.len() < 2 {
            continue;
        }
        let mut pairs = Vec::new();
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        for (i, j) in all_pairs(pool.len()) {
            let (a, b) = (pool[i], pool[j]);
            if let Some(delta) = derive_oracle_label(sigma_of(a), sigma_of(b), 0.0, &mut unused) {
                pairs.push(PairLabel::canonical(a.id.as_str(), b.id.as_str(), delta)?);
            }
        }
        manifest.pair_sets.insert(split.name().into(), pairs);
    }

    manifest.validate()?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
