//! Singing voice synthesis toolkit.
//!
//! The crate is organised bottom-up:
//!
//! - [`score`] turns a vocal recording plus a phone alignment into a pitch
//!   track and an Opencpop-style music score.
//! - [`features`] computes log-mel spectrograms, mel cepstra and a
//!   Griffin-Lim inverse.
//! - [`diffusion`] holds the noise schedule, the forward/reverse steps and the
//!   shallow-diffusion sampling loop.
//! - [`nn`] is a small reverse-mode autodiff engine with the toy auxiliary
//!   decoder, denoiser, style encoder and pitch proxy built on top of it.
//! - [`losses`] and [`metrics`] implement the training objectives and the
//!   objective evaluation suite.
//! - [`synth`] generates deterministic synthetic singing used by tests,
//!   benchmarks and the toy training profile.

pub mod audio;
pub mod diffusion;
pub mod error;
pub mod features;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod score;
pub mod synth;

pub use error::{Error, Result};

/// Sample rate of every waveform handled by the toolkit.
pub const SAMPLE_RATE: u32 = 16_000;
