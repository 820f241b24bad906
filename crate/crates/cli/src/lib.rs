//! Batch driver for the divrank pipeline: synthetic data, clustering,
//! training, re-ranking, evaluation and α sweeps.

pub mod commands;
pub mod seeds;
pub mod synth;

use divrank_core::Error;

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 2,
        Error::Numerical(_) => 3,
        Error::Parse { .. } | Error::Validation(_) | Error::Config(_) | Error::Shape(_) | Error::Json(_) => 1,
    }
}
