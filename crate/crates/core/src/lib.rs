//! Hyperspectral target detection toolkit: ENVI cube ingestion, detector-ready
//! preprocessing, Gaussian likelihood-ratio detectors (quadratic and matched
//! filter, plus a two-stage refinement), precision-recall / ROC evaluation,
//! and seeded synthetic scenes for end-to-end verification.

pub mod annotation;
pub mod cube;
pub mod detect;
pub mod envi;
mod error;
pub mod evaluate;
mod kv;
pub mod library;
pub mod preprocess;
pub mod render;
pub mod spectrum;
pub mod stats;
pub mod synth;

pub use cube::HyperCube;
pub use error::{Error, Result};
pub use spectrum::Spectrum;

/// Parse `key = value` config text (the grammar shared by scenario files and
/// scene specs: brace lists may span lines, keys are case-insensitive).
pub fn config_entries(text: &str) -> Result<Vec<(String, String)>> {
    kv::parse_entries(text)
}
