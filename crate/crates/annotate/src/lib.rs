//! Pairwise blur annotation service.
//!
//! Annotators are served image pairs one at a time, each with its own
//! shuffled queue and a per-pair random left/right layout. Judgments are
//! appended to a line-delimited log and aggregated by strict majority vote.
//! There is no authentication: an annotator is whatever id the client sends.

pub mod campaign;
pub mod server;

pub use campaign::{Campaign, CampaignError, NextPair, ScreenChoice};
pub use server::{router, serve, AppState};
