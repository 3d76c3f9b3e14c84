//! Few-shot recognition of dynamic hand gestures from 3-D hand-landmark
//! sequences.
//!
//! The crate contains a small numerical engine (LSTM, dense layers, losses,
//! hand-written backpropagation and Adam), the landmark data model with its
//! GSJL file format and class-combination augmentation, an N-way K-shot
//! episode sampler, an LSTM relation network with episodic meta-training and
//! evaluation, and the conventional classifier baseline used to measure how
//! many labelled samples few-shot learning saves.

pub mod adam;
pub mod baseline;
pub mod checkpoint;
pub mod data;
pub mod dense;
pub mod episode;
pub mod error;
pub mod loss;
pub mod lstm;
pub mod params;
pub mod relation;
pub mod rng;
pub mod tensor;
pub mod train;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use baseline::{compute_savings, SavingsReport, SmlConfig, SmlParams, SmlSweep};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use data::{gen_synthetic, load_gsjl, save_gsjl, GestureDataset, GestureSequence, LandmarkFrame};
pub use episode::{sample_episode, Episode, EpisodeSpec};
pub use error::{Error, Result};
pub use params::Parameters;
pub use relation::{ArchConfig, Pooling, RelationNetParams, ScoreMatrix};
pub use tensor::{Scalar, Tensor};
pub use train::{evaluate, meta_train, EvalReport, HistoryRow, TrainConfig, TrainOutcome};
