//! Experiment harness, text formats and CLI support for `ala-core`.

pub mod config;
pub mod formats;
pub mod harness;
pub mod output;
