//! Mini-batch training and inference strategies for recurrent sequence models
//! on long-memory regression tasks.
//!
//! The crate trains a single-layer GRU on daily watershed series under four
//! batching schemes (random, stateful, sequential-stateful, conditional) plus a
//! teacher-forcing baseline, and evaluates them with independent, state-chained
//! and prediction-chained inference.

pub mod adam;
pub mod batching;
pub mod config;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod gru;
pub mod inference;
pub mod linalg;
pub mod metrics;
pub mod model_io;
pub mod trainer;

pub use error::{Error, Result};
pub use gru::{GruModel, HiddenState};
pub use linalg::Matrix;
