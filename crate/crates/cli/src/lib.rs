//! Batch command-line front end for the experiments.

pub mod commands;
pub mod config;
pub mod embeddings;
pub mod error;

pub use commands::{run, Cli, Command, GlobalArgs, Report};
pub use config::{canonical, parse_config, parse_config_str, parse_config_with_seed};
pub use embeddings::{load_word_embeddings, read_word_embeddings};
pub use error::{CliError, Result};
