//! Bidirectional cross-view RoI attention for dual-view detection.
//!
//! The crate is organized bottom-up:
//!
//! - [`autograd`]: a small define-by-run reverse-mode engine over `f64` tensors.
//! - [`attention`]: 2D sinusoidal encoding of RoI centers and the bidirectional
//!   co-attention transformer that fuses RoI sets of two views.
//! - [`detector`]: a toy siamese detector (patch encoder, per-cell proposals,
//!   fusion, RoI head) with focal and distance-IoU losses.
//! - [`synth`]: deterministic generator of paired views with geometric
//!   correspondence, plus the mask-out transform and dataset files.
//! - [`froc`]: IoU, NMS, detection matching and FROC curves.
//! - [`relevance`]: gradient-weighted attention relevance and registration
//!   metrics.
//! - [`experiment`]: the training loop and dataset-level evaluation.
//! - [`cli`]: configuration and the experiment commands behind the binary.

pub mod attention;
pub mod autograd;
pub mod cli;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod froc;
pub mod fsutil;
pub mod geometry;
pub mod relevance;
pub mod synth;

pub use error::{Error, Result};
