//! Dataset construction: synthetic images with known blur, pair sampling and
//! labeling, majority voting, quadruplets, and the on-disk manifest.

mod corpus;
mod labels;
mod manifest;
mod synthetic;

pub use corpus::{build_corpus, derive_seed, CorpusPlan, GroupPlan};
pub use labels::{
    all_pairs, derive_oracle_label, majority_vote, sample_pairs, Choice, Judgment, JudgmentSet,
    PairLabel,
};
pub use manifest::{
    pair_sets, sha256_hex, ImageRecord, ImageStore, Manifest, ManifestStats, Provenance, Split,
    MANIFEST_FILE, MANIFEST_SCHEMA_VERSION,
};
pub use synthetic::{
    effective_sigma, generate_synthetic_images, make_quadruplet, render_base, sample_sigma, Family,
    Quadruplet, SyntheticImage, SyntheticSpec, DEFAULT_DEGRADATION_RANGE,
};
