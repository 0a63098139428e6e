//! Probing and attributing answer-to-question-concept attention links in a
//! small BERT-style multiple-choice encoder.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkernel`]: tensors, a gradient tape, and a finite-difference oracle.
//! - [`encoder`]: the stacked-Transformer scorer with attention capture,
//!   attention overrides, and head masking.
//! - [`dataset`]: triple store, synthetic question generation, subword
//!   tokenization, and concept-span alignment.
//! - [`trainer`]: full fine-tuning, classifier-only probing, checkpoints.
//! - [`analysis`]: Integrated Gradients over attention and head pruning.
//! - [`metrics`]: MAW, MAC and MAS link metrics and their report tables.

pub mod analysis;
pub mod dataset;
pub mod encoder;
mod error;
pub mod metrics;
pub mod numkernel;
pub mod trainer;

pub use error::{Error, Result};
pub use numkernel::{Element, Precision, Tensor};
