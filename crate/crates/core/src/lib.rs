//! Integrated spoofing-aware speaker verification (SASV) back-end.
//!
//! Given ASV embeddings (test and enrollment), CM embeddings and the CM
//! classifier's final weight rows, the crate builds the 2×2 score matrix of
//! all cross dot products, maps it through a sigmoid, combines sums and
//! products of the probabilities, and scores each trial with a small
//! trainable head. Several alternative heads, score-level fusion, the
//! SV / SPF / SASV equal error rates and the min t-DCF are included, along
//! with a deterministic synthetic corpus so the whole pipeline can be
//! checked without audio.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod scoring;
pub mod synth;
pub mod training;

pub use embedding::{l2_normalize, Embedding, EmbeddingStore};
pub use error::{Error, Result};
pub use protocol::{build_enrollment, parse_trials, EnrollmentMap, TrialLabel, TrialRecord};
pub use scoring::{CmClassifier, SasvHead, SasvModel, ScoreRecord, Strategy};
