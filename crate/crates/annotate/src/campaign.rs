//! Campaign state: per-annotator queues, left/right presentation, the
//! append-only judgment log and majority-vote export.
//!
//! The log is the source of truth. Each line is one JSON record:
//!
//! ```text
//! {"v":1,"pair_id":3,"annotator_id":"ann1","choice":"second_blurrier","shown_left":"img-7","timestamp_ms":1700000000000}
//! ```
//!
//! `choice` is stored in canonical first/second terms. Replaying the log into
//! an empty campaign rebuilds every judgment, and therefore every export.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use blurrank::datasets::{derive_seed, sha256_hex, Choice, Judgment, JudgmentSet, PairLabel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const LOG_VERSION: u32 = 1;
pub const DEFAULT_TARGET_PER_PAIR: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("unknown pair {0}")]
    UnknownPair(u32),
    #[error("pair {pair_id} was not served to annotator `{annotator}`")]
    NotServed { pair_id: u32, annotator: String },
    #[error("invalid campaign: {0}")]
    Invalid(String),
    #[error("judgment log {path}: {message}")]
    Log { path: PathBuf, message: String },
}

pub type Result<T, E = CampaignError> = std::result::Result<T, E>;

/// What an annotator answered, relative to the on-screen layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenChoice {
    LeftBlurrier,
    RightBlurrier,
    Skip,
}

/// Two images to compare, stored canonically (`id1 < id2`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignPair {
    pub pair_id: u32,
    pub id1: String,
    pub id2: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub v: u32,
    pub pair_id: u32,
    pub annotator_id: String,
    pub choice: Choice,
    pub shown_left: String,
    pub timestamp_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextPair {
    Pair {
        pair_id: u32,
        left: String,
        right: String,
        /// 1-based index of this pair in the annotator's queue.
        position: usize,
        total: usize,
    },
    Done {
        total: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub pair_id: u32,
    pub annotator_id: String,
    pub choice: Choice,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportCounts {
    pub labeled: usize,
    pub excluded: usize,
    pub pending: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Export {
    pub pairs: Vec<PairLabel>,
    pub counts: ExportCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProgress {
    pub judged: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairProgress {
    pub pair_id: u32,
    pub judgments: usize,
    /// `min(judgments, target) / target`.
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub total_pairs: usize,
    pub target_per_pair: usize,
    pub judgments: usize,
    pub complete_pairs: usize,
    pub annotators: BTreeMap<String, AnnotatorProgress>,
    pub pairs: Vec<PairProgress>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignInfo {
    pub seed: u64,
    pub target_per_pair: usize,
    pub total_pairs: usize,
    pub complete_pairs: usize,
    pub status: CampaignStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignStatus {
    Active,
    Complete,
}

pub struct Campaign {
    seed: u64,
    target: usize,
    pairs: Vec<CampaignPair>,
    judgments: JudgmentSet,
    served: BTreeSet<(String, u32)>,
    queues: BTreeMap<String, Vec<u32>>,
    log: Option<(PathBuf, File)>,
}

impl Campaign {
    /// In-memory campaign over `pairs`; ids of each pair are canonicalized.
    pub fn new(pairs: Vec<(String, String)>, seed: u64, target_per_pair: usize) -> Result<Self> {
        if target_per_pair == 0 {
            return Err(CampaignError::Invalid(
                "target annotators per pair must be at least 1".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(pairs.len());
        for (k, (a, b)) in pairs.into_iter().enumerate() {
            if a == b {
                return Err(CampaignError::Invalid(format!(
                    "pair {k} compares `{a}` with itself"
                )));
            }
            let (id1, id2) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((id1.clone(), id2.clone())) {
                return Err(CampaignError::Invalid(format!(
                    "duplicate pair ({id1}, {id2})"
                )));
            }
            let pair_id =
                u32::try_from(k).map_err(|_| CampaignError::Invalid("too many pairs".into()))?;
            out.push(CampaignPair { pair_id, id1, id2 });
        }
        Ok(Self {
            seed,
            target: target_per_pair,
            pairs: out,
            judgments: JudgmentSet::new(),
            served: BTreeSet::new(),
            queues: BTreeMap::new(),
            log: None,
        })
    }

    /// Attaches a judgment log, replaying any records it already holds.
    ///
    /// A final line without a newline is an interrupted append and is dropped.
    pub fn with_log(mut self, path: &Path) -> Result<Self> {
        let log_err = |message: String| CampaignError::Log {
            path: path.to_path_buf(),
            message,
        };
        if path.exists() {
            let file = File::open(path).map_err(|e| log_err(e.to_string()))?;
            let mut reader = BufReader::new(file);
            let mut line = String::new();
            let mut lineno = 0;
            let mut valid_len = 0u64;
            loop {
                line.clear();
                let n = reader
                    .read_line(&mut line)
                    .map_err(|e| log_err(e.to_string()))?;
                if n == 0 || !line.ends_with('\n') {
                    break;
                }
                lineno += 1;
                valid_len += n as u64;
                if line.trim().is_empty() {
                    continue;
                }
                let record: LogRecord = serde_json::from_str(&line)
                    .map_err(|e| log_err(format!("line {lineno}: {e}")))?;
                if record.v != LOG_VERSION {
                    return Err(log_err(format!(
                        "line {lineno}: unknown record version {}",
                        record.v
                    )));
                }
                self.apply(&record)
                    .map_err(|e| log_err(format!("line {lineno}: {e}")))?;
            }
            let file = OpenOptions::new()
                .write(true)
                .open(path)
                .map_err(|e| log_err(e.to_string()))?;
            file.set_len(valid_len)
                .map_err(|e| log_err(e.to_string()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| log_err(e.to_string()))?;
        self.log = Some((path.to_path_buf(), file));
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn target_per_pair(&self) -> usize {
        self.target
    }

    pub fn pairs(&self) -> &[CampaignPair] {
        &self.pairs
    }

    pub fn pair(&self, pair_id: u32) -> Result<&CampaignPair> {
        self.pairs
            .get(pair_id as usize)
            .ok_or(CampaignError::UnknownPair(pair_id))
    }

    pub fn judgments(&self) -> &JudgmentSet {
        &self.judgments
    }

    /// Whether `annotator` sees the canonical second image on the left for this pair.
    pub fn is_swapped(&self, pair_id: u32, annotator: &str) -> bool {
        derive_seed(
            derive_seed(self.seed ^ annotator_key(annotator), u64::from(pair_id)),
            0x5eed,
        ) & 1
            == 1
    }

    /// `(left, right)` image ids as shown to `annotator`.
    pub fn layout(&self, pair_id: u32, annotator: &str) -> Result<(String, String)> {
        let p = self.pair(pair_id)?;
        Ok(if self.is_swapped(pair_id, annotator) {
            (p.id2.clone(), p.id1.clone())
        } else {
            (p.id1.clone(), p.id2.clone())
        })
    }

    /// Pair order for `annotator`: every pair once, shuffled per (seed, annotator).
    pub fn queue(&mut self, annotator: &str) -> &[u32] {
        let (seed, n) = (self.seed, self.pairs.len());
        self.queues.entry(annotator.to_string()).or_insert_with(|| {
            let mut q: Vec<u32> = (0..n as u32).collect();
            q.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                annotator_key(annotator),
            )));
            q
        })
    }

    /// The annotator's first unjudged pair. Repeated calls return the same
    /// pair until it is judged.
    pub fn next_pair(&mut self, annotator: &str) -> Result<NextPair> {
        if annotator.is_empty() {
            return Err(CampaignError::Invalid(
                "annotator id must not be empty".into(),
            ));
        }
        let total = self.pairs.len();
        let queue = self.queue(annotator).to_vec();
        let Some((position, pair_id)) = queue
            .into_iter()
            .enumerate()
            .find(|(_, p)| !self.judgments.has(*p, annotator))
        else {
            return Ok(NextPair::Done { total });
        };
        self.served.insert((annotator.to_string(), pair_id));
        let (left, right) = self.layout(pair_id, annotator)?;
        Ok(NextPair::Pair {
            pair_id,
            left,
            right,
            position: position + 1,
            total,
        })
    }

    /// Records a judgment made against the annotator's on-screen layout.
    pub fn submit(
        &mut self,
        annotator: &str,
        pair_id: u32,
        choice: ScreenChoice,
        timestamp_ms: u64,
    ) -> Result<Ack> {
        self.pair(pair_id)?;
        if !self.served.contains(&(annotator.to_string(), pair_id)) {
            return Err(CampaignError::NotServed {
                pair_id,
                annotator: annotator.to_string(),
            });
        }
        let swapped = self.is_swapped(pair_id, annotator);
        let canonical = match (choice, swapped) {
            (ScreenChoice::Skip, _) => Choice::Skip,
            (ScreenChoice::LeftBlurrier, false) | (ScreenChoice::RightBlurrier, true) => {
                Choice::FirstBlurrier
            }
            (ScreenChoice::LeftBlurrier, true) | (ScreenChoice::RightBlurrier, false) => {
                Choice::SecondBlurrier
            }
        };
        let record = LogRecord {
            v: LOG_VERSION,
            pair_id,
            annotator_id: annotator.to_string(),
            choice: canonical,
            shown_left: self.layout(pair_id, annotator)?.0,
            timestamp_ms,
        };
        if let Some((path, file)) = &mut self.log {
            let mut line = serde_json::to_string(&record).expect("log record serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| CampaignError::Log {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
        }
        self.apply(&record)?;
        Ok(Ack {
            pair_id,
            annotator_id: record.annotator_id,
            choice: canonical,
        })
    }

    fn apply(&mut self, r: &LogRecord) -> Result<()> {
        self.pair(r.pair_id)?;
        self.served.insert((r.annotator_id.clone(), r.pair_id));
        self.judgments.record(&Judgment {
            pair_id: r.pair_id,
            annotator_id: r.annotator_id.clone(),
            choice: r.choice,
            timestamp_ms: r.timestamp_ms,
        });
        Ok(())
    }

    /// Majority-vote labels for pairs with full coverage. Pairs below the
    /// target judgment count are pending; covered pairs without a strict
    /// majority are excluded.
    pub fn export(&self) -> Export {
        let mut pairs = Vec::new();
        let mut counts = ExportCounts {
            labeled: 0,
            excluded: 0,
            pending: 0,
        };
        for p in &self.pairs {
            if self.judgments.count(p.pair_id) < self.target {
                counts.pending += 1;
                continue;
            }
            match self.judgments.vote(p.pair_id) {
                Some(delta) => {
                    counts.labeled += 1;
                    pairs.push(PairLabel {
                        id1: p.id1.clone(),
                        id2: p.id2.clone(),
                        delta,
                    });
                }
                None => counts.excluded += 1,
            }
        }
        Export { pairs, counts }
    }

    pub fn progress(&self) -> Progress {
        let total = self.pairs.len();
        let annotators = self
            .judgments
            .per_annotator()
            .into_iter()
            .map(|(a, judged)| (a, AnnotatorProgress { judged, total }))
            .collect();
        let pairs: Vec<PairProgress> = self
            .pairs
            .iter()
            .map(|p| {
                let judgments = self.judgments.count(p.pair_id);
                PairProgress {
                    pair_id: p.pair_id,
                    judgments,
                    coverage: judgments.min(self.target) as f64 / self.target as f64,
                }
            })
            .collect();
        Progress {
            total_pairs: total,
            target_per_pair: self.target,
            judgments: pairs.iter().map(|p| p.judgments).sum(),
            complete_pairs: pairs.iter().filter(|p| p.judgments >= self.target).count(),
            annotators,
            pairs,
        }
    }

    pub fn info(&self) -> CampaignInfo {
        let complete_pairs = self
            .pairs
            .iter()
            .filter(|p| self.judgments.count(p.pair_id) >= self.target)
            .count();
        CampaignInfo {
            seed: self.seed,
            target_per_pair: self.target,
            total_pairs: self.pairs.len(),
            complete_pairs,
            status: if complete_pairs == self.pairs.len() {
                CampaignStatus::Complete
            } else {
                CampaignStatus::Active
            },
        }
    }
}

fn annotator_key(annotator: &str) -> u64 {
    let digest = sha256_hex(annotator.as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}
