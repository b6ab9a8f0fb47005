//! Conversation graphs for task-oriented dialogue management.
//!
//! Annotated dialogues are encoded into value-abstracted dialogue states and
//! unified into a frequency-weighted directed graph. The graph drives data
//! augmentation (most frequent sampling, oracle filtering, downsampling and
//! dialogue duplication), multi-reference training with a soft binary
//! cross-entropy loss, and multi-reference evaluation with SoftF1.

pub mod augment;
pub mod bits;
pub mod dialogue;
pub mod error;
pub mod experiment;
#[doc(hidden)]
pub mod fixtures;
pub mod graph;
pub mod instances;
pub mod metrics;
pub mod policy;

pub use bits::BitVector;
pub use dialogue::{Corpus, Dialogue, DialogueAct, Speaker, Split, Turn, Vocabulary};
pub use error::{Error, Result};
pub use graph::{build_graph, merge_graphs, ConvGraph, GraphStats, Level, NodeKey};
pub use instances::{extract_instances, InstanceSet, TrainingInstance};
pub use metrics::{evaluate, f1, soft_f1, welch_ttest, PredictionRecord, ScoreReport};
pub use policy::{bce_loss, sbce_loss, train, LossKind, PolicyModel, TrainConfig};
