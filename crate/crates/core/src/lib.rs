//! Structure-aware dense retrieval for clinical trial documents.
//!
//! Trials are split into short key attributes (title, intervention, disease,
//! outcome, keywords) and a long context. Each attribute is encoded separately
//! by a compact transformer; the context embedding then attends over the
//! attribute embeddings to produce one trial-level vector. Training is
//! self-supervised: hard negatives come from swapping a field with a trial that
//! targets the same disease, and entity-level pairs come from a concept
//! dictionary.
//!
//! Module map:
//! - [`corpus`]: trial records, JSONL parsing, status labels, splits
//! - [`knowledge`]: concept dictionary and longest-match entity extraction
//! - [`augment`]: global and local contrastive sample construction
//! - [`encoder`]: vocabulary, transformer, attention aggregation, checkpoints
//! - [`train`]: InfoNCE losses, MLM, AdamW, gradient checking, training loop
//! - [`retrieval`]: dense index, TF-IDF and BM25 baselines, candidate pools
//! - [`eval`]: precision/recall/nDCG with bootstrap intervals
//! - [`outcome`]: completion/termination classifier on trial embeddings
//! - [`app`]: configuration, search rendering, embedding export
//! - [`synth`]: synthetic trial collections for experiments

pub mod app;
pub mod augment;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod knowledge;
pub mod linalg;
pub mod outcome;
pub mod retrieval;
pub mod synth;
pub mod text;
pub mod train;

mod binio;

pub use error::{Error, Result};
