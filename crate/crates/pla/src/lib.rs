//! File formats, run configuration, synthetic fixtures and the command
//! pipeline around `pla-core`.

pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
