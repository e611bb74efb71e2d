//! Command-line driver: data generation, training, evaluation, analysis
//! and p-sweeps over the `tten-core` library.

pub mod args;
pub mod commands;
pub mod config_file;
pub mod output;
pub mod settings;

pub use args::Cli;
pub use commands::run;
