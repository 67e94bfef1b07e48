//! Few-shot classification over precomputed embedding vectors.
//!
//! Class prototypes (plain or norm-weighted means), a ridge-regularized LDA
//! classifier and mutual-information feature selection, plus an evaluation
//! harness for accuracy, mAP, k-fold cross-validation and parameter sweeps.

pub mod embedstore;
pub mod error;
pub mod eval;
pub mod featselect;
mod fsutil;
pub mod lda;
pub mod linalg;
pub mod prototypes;
pub mod sampler;
pub mod seed;
pub mod synth;
pub mod training;

pub use embedstore::{
    bind, load_dataset, read_embeddings, read_manifest, write_embeddings, write_manifest,
    ClassVocab, Dataset, EmbeddingMatrix, Manifest, Record, Selector, Split, TaskType,
};
pub use error::{Error, Result};
pub use eval::{EvalReport, Method, RunConfig, SweepAxis};
pub use featselect::{FeatureMask, KRatio, MiScores};
pub use lda::LdaModel;
pub use prototypes::{Metric, PrototypeSet, WeightScheme};
pub use sampler::{Strategy, SupportSets, SupportSpec};
pub use synth::{GainJitter, SynthSpec};
