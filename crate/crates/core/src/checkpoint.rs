//! Self-describing model checkpoint.
//!
//! A checkpoint is one JSON document with the fields `format_version`,
//! `feature_dim`, `hidden_dim`, `input_width`, `input_height`, `epoch`,
//! `params` (`w1`, `b1`, `w2`, `b2`), `normalizer` (`mean`, `std`), `config`
//! and `config_hash`. Floats are written in shortest round-trip form, so
//! save followed by load reproduces every parameter bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::sha256_hex;
use crate::error::{Error, Result};
use crate::evaluation::{ImageScorer, ScorerInfo};
use crate::features::{extract_features, FeatureNormalizer, FeatureVector, FEATURE_DIM};
use crate::imaging::{prepare_input, Image};
use crate::scorer::{score, ScorerParams, HIDDEN_DIM};
use crate::trainer::TrainConfig;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub input_width: usize,
    pub input_height: usize,
    pub epoch: usize,
    pub params: ScorerParams,
    pub normalizer: FeatureNormalizer,
    pub config: TrainConfig,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn new(
        params: ScorerParams,
        normalizer: FeatureNormalizer,
        config: TrainConfig,
        input_size: (usize, usize),
        epoch: usize,
    ) -> Result<Self> {
        Ok(Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            feature_dim: FEATURE_DIM,
            hidden_dim: HIDDEN_DIM,
            input_width: input_size.0,
            input_height: input_size.1,
            epoch,
            params,
            normalizer,
            config_hash: config.hash()?,
            config,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unknown format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.feature_dim != FEATURE_DIM || self.hidden_dim != HIDDEN_DIM {
            return Err(Error::Checkpoint(format!(
                "shape {}x{} does not match this build ({FEATURE_DIM}x{HIDDEN_DIM})",
                self.feature_dim, self.hidden_dim
            )));
        }
        if self.input_width == 0 || self.input_height == 0 {
            return Err(Error::Checkpoint("input size must be positive".into()));
        }
        if !self.params.is_finite() || !self.normalizer.is_valid() {
            return Err(Error::Checkpoint(
                "non-finite parameters or invalid normalizer".into(),
            ));
        }
        if self.config.hash()? != self.config_hash {
            return Err(Error::Checkpoint(
                "config_hash does not match config".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Score of already-extracted, unnormalized features.
    pub fn score_features(&self, f: &FeatureVector) -> Result<f64> {
        Ok(score(&self.params, &self.normalizer.normalize(f))?.value())
    }
}

impl ImageScorer for Checkpoint {
    fn identity(&self) -> String {
        // Parameters are included so two checkpoints with one config still differ.
        format!(
            "{}:{}",
            self.config_hash,
            sha256_hex(serde_json::to_string(self).unwrap_or_default().as_bytes())
        )
    }

    fn info(&self) -> ScorerInfo {
        ScorerInfo {
            name: "checkpoint".into(),
            mode: Some(self.config.mode.name().into()),
            label_set: Some(self.config.label_set.name().into()),
            seed: Some(self.config.seed),
        }
    }

    fn score_image(&self, img: &Image) -> Result<f64> {
        let f = if img.width() == self.input_width && img.height() == self.input_height {
            extract_features(img)?
        } else {
            extract_features(&prepare_input(img, self.input_width, self.input_height)?)?
        };
        self.score_features(&f)
    }
}
