//! Pool-based active learning emulation for sequence tagging.
//!
//! The crate is organised around the pieces of an emulated annotation loop:
//!
//! - [`corpus`]: column-format corpora, tag schemes, entity spans and a
//!   synthetic corpus generator.
//! - [`metrics`]: span-level precision/recall/F1 and learning-curve aggregation.
//! - [`crf`]: a feature-based linear-chain CRF with exact inference.
//! - [`neural`]: a windowed per-token neural tagger with three dropout sites and
//!   Monte Carlo inference.
//! - [`strategies`]: acquisition functions and token-budgeted batch selection.
//! - [`engine`]: the iterative seed / train / query / reveal loop, repeats,
//!   acquisition-successor mismatch and record persistence.

pub mod corpus;
pub mod crf;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod seed;
pub mod strategies;

pub use corpus::{Corpus, Labeled, Observed, Scheme, Sentence, Span, TagSet, Token};
pub use engine::{ExperimentConfig, RunRecord};
pub use metrics::{F1Report, LearningCurve};
pub use model::{ModelSpec, TrainedModel};
