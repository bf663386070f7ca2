//! Batch command-line front end: score building, feature extraction, toy
//! training, shallow-diffusion synthesis, evaluation and plot-data export.

use std::fmt;

pub mod cli;
pub mod commands;
pub mod config;
pub mod layout;
pub mod pool;

pub use config::{Profile, RunConfig};

/// Marks a failure caused by the user's input: bad arguments, missing or
/// malformed files. Such failures exit with status 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Exit status for an error: 2 when any cause is an [`InputError`], else 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|c| c.is::<InputError>()) {
        EXIT_INPUT
    } else {
        EXIT_RUNTIME
    }
}

/// Wraps a core error raised while reading user input.
pub(crate) fn input<T>(r: svs_core::Result<T>, what: impl fmt::Display) -> anyhow::Result<T> {
    r.map_err(|e| InputError(format!("{what}: {e}")).into())
}
