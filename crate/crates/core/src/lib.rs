//! Convolutional token tagger for location references in short, noisy texts.
//!
//! The pipeline mirrors how the pieces are used end to end:
//!
//! - [`corpus`]: normalize tweet-style text, load and save annotated corpora,
//!   and generate synthetic corpora from a gazetteer and templates.
//! - [`embedding`]: vocabulary, pretrained vector loading, the lookup table,
//!   and fixed-length encoding of tweets.
//! - [`nn`]: the network (multi-width convolution branches, max pooling,
//!   dense stack with dropout, sigmoid output) with exact reverse-mode gradients
//!   and a binary model file format.
//! - [`training`]: binary cross-entropy, Adam, the mini-batch loop, and a
//!   finite-difference gradient checker.
//! - [`metrics`]: per-instance multi-label scores and their aggregation.
//! - [`harness`]: k-fold cross-validation, architecture sweeps, and the
//!   key-value config file format.
//!
//! Data-parallel loops (per-example gradients in a batch, per-fold training,
//! batch inference) go through [`exec::Execution`]. With the default `parallel`
//! feature they run on rayon; without it they fall back to a sequential loop.
//! Reductions always happen in a fixed order, so results are bit-identical
//! either way.

pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod exec;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod training;

pub use corpus::{AnnotatedTweet, Corpus, Gazetteer, RawRecord};
pub use embedding::{EmbeddingMatrix, EncodedTweet, Vocabulary};
pub use exec::Execution;
pub use metrics::{InstanceScores, MetricsReport};
pub use nn::{Model, ModelConfig};
