//! Multilingual dual-encoder sentence embeddings, desk scale.
//!
//! Everything needed to train and evaluate the retrieval-focused sentence
//! encoders: a shared subword vocabulary, a small reverse-mode autodiff
//! stack, three encoder architectures with task heads, multi-task training,
//! exact nearest-neighbor retrieval with ranking metrics, a BM25 baseline,
//! evaluation-task construction, and transfer-task probes.

pub mod autograd;
pub mod encoders;
pub mod error;
pub mod multitask;
pub mod retrieval;
pub mod subword;
pub mod synth;
pub mod taskgen;
pub mod transfer;

pub use autograd::{Adam, Dtype, Graph, NodeId, ParameterSet, Real, Session, Tensor};
pub use encoders::{Arch, BagBatch, EncoderConfig, TokenBatch};
pub use error::{Error, Result};
pub use multitask::{NliLabel, Task, TrainConfig, TrainState, TrainingExample};
pub use retrieval::{Bm25Index, EmbeddingIndex, Metric, ScoredResult};
pub use subword::{SubwordVocabulary, TokenSequence};
pub use taskgen::{Candidate, ReqaLevel, RetrievalTaskSpec, SentenceSpan, SquadDocument};
pub use transfer::{Probe, ProbeConfig, StsPair};
