//! Command-line front end for the curbscan engine.
//!
//! The heavy lifting lives in `curbscan-core`; this crate adds everything
//! that needs an operating system: point stream file formats, the model
//! container format, run configuration, the parallel pipeline drivers and
//! the subcommand implementations behind the `curbscan` binary.

pub mod commands;
pub mod engine;
pub mod io;
pub mod model_file;
pub mod run_config;
