//! Multi-modal population-graph learning for per-subject binary diagnosis.
//!
//! Imaging connectivity features and tabular phenotypes are aligned to a
//! common width, joined into a population graph whose edge weights combine
//! feature similarity with a reward-weighted attribute affinity, encoded by
//! one graph-transformer U-Net per modality, fused with attention and trained
//! end to end under a composite objective.

pub mod align;
pub mod amrs;
pub mod data;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod graph;
pub mod harness;
pub mod io;
pub mod objective;
pub mod params;
pub mod tape;

pub use error::{Error, Result};
