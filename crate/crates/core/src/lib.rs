//! Mapping corporate disclosure text to ESG taxonomy activities.
//!
//! The crate covers the retrieval-augmented mapping pipeline (taxonomy
//! selection, chunking, vector retrieval, binary classification), human
//! adjudication of candidate mappings, and the benchmark tooling built on top
//! of it: dataset splits, paraphrase augmentation, cross-validation folds,
//! fine-tuning export and weighted evaluation metrics.

pub mod adjudication;
pub mod benchmark;
pub mod classifier;
pub mod corpus;
pub mod error;
pub mod jsonl;
pub mod metrics;
mod parallel;
pub mod pipeline;
pub mod store;
pub mod taxonomy;
pub mod vecindex;

pub use error::{Error, Result};
