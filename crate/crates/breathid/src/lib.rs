//! Speaker identification and verification from breath sounds.
//!
//! Two recognition chains over short breath recordings:
//!
//! * a classical chain — MFCC frames, an EM-trained diagonal GMM universal
//!   background model, MAP-adapted supervectors, total-variability
//!   i-vectors, length normalization, LDA and a linear SVM or MLP;
//! * a neural chain — constant-Q log spectrograms fed to a small
//!   CNN + max-pool + LSTM + dropout + softmax network trained with
//!   Adadelta and early stopping.
//!
//! A deterministic synthetic breath corpus (turbulent noise shaped by
//! speaker-specific resonators) makes the whole pipeline runnable and
//! testable without any proprietary data. Every stage persists its artifact
//! in the `BRTH` container format, and the `breathid` binary exposes each
//! stage as a subcommand. See the `examples/` directory for one runnable
//! program per capability.

pub mod audio;
pub mod container;
pub mod error;
pub mod features;
pub mod gmm;
pub mod ivector;

pub use error::{Error, Result};
