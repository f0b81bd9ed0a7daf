//! labelbench: generate topic labels for topic-model keyword sets through
//! interchangeable LLM backends and evaluate the results — distinct-label
//! counts, per-topic stability, embedding cosine similarity, rubric-based
//! human scoring, and cost accounting.

pub mod annotate;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod gateway;
pub mod metrics;
pub mod prompt;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
