//! Story evolution mining over dated, entity-annotated news corpora.
//!
//! Given seed documents, the past timeline is split into coherent but
//! mutually dissimilar segments, and every candidate document receives a
//! soft relevance weight, by minimizing a continuous diffusion objective
//! with bound-constrained L-BFGS.

pub mod candidates;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod objective;
pub mod optimizer;
pub mod pipeline;
pub mod prediction;
pub mod synth;
pub mod topics;

pub use error::{Error, Result};
