//! Blur scoring learned from pairwise rank labels.
//!
//! The pipeline: [`imaging`] degrades and filters grayscale rasters,
//! [`features`] turns an image into a 12-value descriptor, [`scorer`] maps
//! descriptors to a sharpness score in (0, 1), [`losses`] supplies the ranking
//! objectives, [`trainer`] fits the scorer from labeled pairs plus unlabeled
//! images, and [`evaluation`] reports rank correlation on held-out sets.
//! [`datasets`] covers synthetic corpora, pair labels and the on-disk manifest.

pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod imaging;
pub mod losses;
pub mod scorer;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
