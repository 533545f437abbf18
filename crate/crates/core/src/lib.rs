//! Evaluation metrics and data-curation tooling for instruction-driven text
//! rewriting.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`corpusio`]: JSONL record schemas and streaming readers/writers.
//! - [`textops`]: tokenization, sentence splitting, word-level distances.
//! - [`metrics`]: SARI, GLEU, BLEU, ROUGE-1/L and Update-ROUGE.
//! - [`nli`]: entailment scoring through a remote service, a cache, or a
//!   lexical stub.
//! - [`wikiedits`]: revision-history parsing, paragraph diffs and edit filters.
//! - [`synthgen`]: chain-of-thought instruction prompts and target generation.
//! - [`quality`]: the binary rewrite-quality function and post-processing.
//! - [`preference`]: comparison pairs and a pairwise-loss linear reward model.
//! - [`stats`]: dataset statistics, Likert summaries and Fleiss' kappa.

pub mod corpusio;
pub mod http;
pub mod lexicon;
pub mod metrics;
pub mod nli;
pub mod preference;
pub mod quality;
pub mod stats;
pub mod synthgen;
pub mod textops;
pub mod wikiedits;

/// Version of the JSON configuration schemas (thresholds, shots, keyword dirs).
pub const CONFIG_SCHEMA_VERSION: u32 = 1;
