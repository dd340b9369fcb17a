//! Character-level document classification.
//!
//! Documents are split into sentences, each sentence is one-hot encoded over a
//! fixed 71-symbol alphabet and mapped to a fixed-width vector by a
//! convolutional/BiLSTM sentence encoder. A second convolutional/BiLSTM network
//! reads the sequence of sentence vectors and outputs per-class probabilities,
//! exposing its penultimate activation as a document embedding.
//!
//! Module map:
//! - [`text`]: alphabet, sentence splitting, one-hot encoding, dataset ingestion.
//! - [`tensor`]: dense tensors with a reverse-mode tape and a gradient checker.
//! - [`model`]: layer specs, the two coupled networks, checkpoints.
//! - [`training`]: losses, Adam, the training loop and metrics.
//! - [`transfer`]: head replacement, layer freezing, fine-tuning.
//! - [`embed`]: embedding extraction, exact t-SNE, silhouette, scatter plots.

pub mod embed;
pub mod error;
pub mod model;
pub mod plot;
pub mod synthetic;
pub mod tensor;
pub mod text;
pub mod training;
pub mod transfer;

pub use error::{Error, Result};
