//! Spatio-temporal deep graph infomax.
//!
//! Unsupervised node embeddings for a graph whose node features evolve over
//! time: a graph-convolutional encoder is trained jointly with small
//! discriminators to tell `(embedding at t, features at t + k)` pairs taken
//! from the same node apart from pairs whose future features come from a
//! row-permuted snapshot. The frozen embeddings are then concatenated to the
//! raw features of a per-node LSTM sequence-to-sequence forecaster.

pub mod dataset;
pub mod encoder;
pub mod error;
pub mod forecaster;
pub mod graph;
pub mod metrics;
pub mod mi;
pub mod numerics;
pub mod params;
pub mod pretrain;

pub use error::{Error, Result};
pub use forecaster::{Forecast, Mode, RegressorConfig, Seq2SeqParams};
pub use metrics::{Comparison, MetricsReport};
pub use pretrain::{EmbeddingSeries, PretrainConfig, TrainHistory};
pub use graph::{Distance, Edge, Graph, Normalization};
pub use numerics::{AdamState, LrSchedule, Tape, Tensor, Var};
