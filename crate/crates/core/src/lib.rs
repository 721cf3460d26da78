//! Variant-aware multi-path network.
//!
//! Variant sets parsed from VCF files are encoded as tokens and fed through a
//! permutation-invariant set-attention path, while the per-variant quality
//! channels go through a 1-D convolutional path. A sigmoid gate derived from
//! the quality path modulates the set representation before classification.

pub mod engine;
pub mod error;
pub mod explain;

pub use error::{Result, VampError};
pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod batch;
pub mod cohort;
pub mod config;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod synth;
pub mod tokenizer;
pub mod train;
pub mod vcf;
