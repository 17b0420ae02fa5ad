//! Zero-shot action classification.
//!
//! A video is scored against action classes it was never trained on by
//! combining two signals:
//!
//! * object evidence: per-frame object logits are averaged, softmaxed and
//!   mapped onto actions through a cosine affinity between object
//!   definitions and action class embeddings;
//! * sentence evidence: a one-layer classifier trained on the action
//!   description sentences scores the video's caption embeddings.
//!
//! Both signals can be sparsified to their top entries before they are
//! summed. [`evaluation`] runs the repeated random-split protocol and
//! writes reproducible reports.

pub mod affinity;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod fixture;
pub mod fusion;
pub mod matrix;
pub mod objects;
pub mod sentences;
pub mod store;
pub mod topk;

pub use affinity::{compute_affinity, AffinityMatrix};
pub use config::EngineConfig;
pub use error::{Error, FormatError, Result};
pub use evaluation::{emit_report, evaluate, generate_splits, EvalConfig, RunStatistics, SplitSpec};
pub use fixture::{generate_fixture, generate_fixture_with, FixtureParams};
pub use fusion::{classify, classify_batch, Mode, Pipeline, Prediction, SparsityConfig};
pub use matrix::{load_matrix, save_matrix, EmbeddingMatrix};
pub use objects::{aggregate_video, ObjectScoreVector};
pub use sentences::{train, train_on_vocab, SentenceClassifier, SentenceScoreVector, TrainConfig};
pub use store::{load_workspace, ActionVocabulary, ObjectVocabulary, VideoRecord, Workspace};
