//! Encoder-decoder transformer for QASM-to-QASM translation: packed-batch
//! forward and backward passes, label-smoothed cross-entropy combined with a
//! decoded-fidelity term, Adam training, sampling decoders and checkpoints.

use std::path::PathBuf;

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod eval;
pub mod layout;
pub mod loss;
pub mod model;
pub mod ops;
pub mod optim;
pub mod scalar;
pub mod train;

pub use config::{DecodeConfig, LossConfig, ModelConfig, OptimizerConfig, Strategy};
pub use eval::{EvalReport, Example};
pub use model::{Packed, Transformer};
pub use train::{TrainConfig, TrainSetup};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds the context window of {window}")]
    SequenceTooLong { len: usize, window: usize },
    #[error("token id {id} outside a vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("vocabulary hash mismatch: checkpoint expects {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("loss became non-finite at step {step}")]
    NonFinite { step: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
}
