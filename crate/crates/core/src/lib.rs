//! Rubric-based assessment of long-form student reports.
//!
//! Each rubric dimension is treated as a query against the sentences of a
//! report. A dual-encoder [`verifier`] ranks sentences, decides whether the
//! report earns a non-zero score on the dimension and forwards the top-k
//! sentences to an ordinal [`grader`], which outputs a distribution over the
//! scores 0..=5. [`metrics`] holds the evaluation and agreement measures,
//! [`pipeline`] ties the stages together (training, assessment, ablations,
//! grid search and presence-only mode) and [`cli`] exposes it all as a
//! command-line tool.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
#[doc(hidden)]
pub mod gradcheck;
pub mod grader;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod verifier;

pub use error::{Error, Result};
