//! Cross-lingual named entity recognition.
//!
//! The crate covers the whole pipeline for transferring an NER tagger from a
//! resource-rich source language to a low-resource target language:
//!
//! * [`corpus`]: CoNLL reading/writing, BIO validation and conversion,
//!   corpus statistics and annotator agreement.
//! * [`embeddings`]: word vector tables and identical-string seeded
//!   orthogonal Procrustes alignment.
//! * [`tagger`]: a BiLSTM-CRF tagger with hand-written backpropagation.
//! * [`tnt`]: a trigram HMM baseline with deleted interpolation and suffix
//!   analysis.
//! * [`eval`]: exact-match span precision, recall and F1.
//! * [`transfer`]: zero-shot, in-language and few-shot experiment regimes.
//!
//! Batch work (tagging a corpus, per-sentence gradients, experiment cells)
//! goes through [`par`], which uses rayon when the `parallel` feature is on and
//! falls back to plain iterators otherwise.

pub mod container;
pub mod corpus;
pub mod embeddings;
mod error;
pub mod eval;
pub mod kv;
pub mod linalg;
pub mod par;
pub mod synthetic;
pub mod tagger;
pub mod tnt;
pub mod transfer;

pub use error::{Error, Result};
