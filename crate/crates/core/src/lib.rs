//! Per-mention entity disambiguation.
//!
//! Every ambiguous mention gets its own small softmax-regression model over
//! word-overlap features computed against contrastive tf-idf contexts of its
//! candidate senses. Around that core sit corpus ingest, annotation
//! extension, dataset scrambling, pruning, evaluation and an HTTP service.

pub mod corpus;
pub mod dataset;
pub mod disambiguator;
pub mod error;
pub mod eval;
pub mod extension;
pub mod features;
pub mod forest;
pub mod pipeline;
pub mod pruner;
pub mod regression;
pub mod rng;
pub mod service;
pub mod snapshot;
pub mod store;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
