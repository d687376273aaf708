//! Reference-guided targeted sound detection.
//!
//! Given a mixture recording and a short reference clip of some sound class,
//! the detector decides for every encoder frame whether that class is active
//! in the mixture. Both clips go through one shared convolutional encoder;
//! the reference is summarized into a clip embedding that conditions the
//! mixture frames before a bidirectional GRU and a per-frame sigmoid head.
//!
//! Module map:
//!
//! * [`signal`] - WAV I/O, resampling and the log-mel front-end.
//! * [`scenegen`] - synthetic event bank, soundscapes, reference/mixture pairs
//!   and on-disk manifests.
//! * [`nn`] - layers with hand-written backward passes.
//! * [`model`] - encoder, fusion variants, temporal model, heads, checkpoints.
//! * [`loss`] - clip cross-entropy plus frame binary cross-entropy.
//! * [`train`] - augmentation, AdamW, plateau schedule and the training loop.
//! * [`eval`] - post-processing, segment-based scores, reports and ablations.
//! * [`config`] - the run configuration document.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod loss;
pub mod model;
pub mod nn;
pub mod scenegen;
pub mod signal;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Result, TsdError};
