//! Frame-level valence/arousal estimation on face-video sequences.
//!
//! The crate covers the whole pipeline: corpus construction
//! ([`corpus`]), a binary sequence-record container and its loader
//! ([`datapipe`]), a small reverse-mode autodiff engine ([`autodiff`]),
//! CNN → stacked RNN (+ windowed attention) → FC models ([`cells`]),
//! CCC/MSE metrics ([`metrics`]) and the train / watch-evaluate / test
//! programs with the four transfer strategies ([`train`]).

pub mod autodiff;
pub mod cells;
pub mod corpus;
pub mod datapipe;
pub mod error;
pub mod metrics;
pub mod params;
pub mod train;

pub use error::{Error, Result};
