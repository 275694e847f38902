//! hadeskit: anomaly detection for software-system telemetry.
//!
//! The toolkit fuses two telemetry modalities over fixed time windows
//! ("chunks"): log event sequences, encoded by self-trained token embeddings
//! and a Transformer encoder, and multivariate metric segments, encoded by
//! hierarchical causal-convolution stacks grouped by resource aspect. A
//! cross-modal attention module fuses both into a global representation that
//! a small classification head turns into a normal/abnormal verdict.
//! Training is semi-supervised: a supervised warm-up on a small labeled
//! subset, confidence-filtered pseudo-labeling of the rest, and a second
//! phase on the mixed loss.
//!
//! A deterministic fault-injection synthesizer generates aligned logs,
//! metrics, provenance, and ground truth so the whole pipeline is testable
//! on a desk.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod logs;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
