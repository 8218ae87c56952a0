//! Command-line front end for `fbnet-core`: experiment configs, CSV data,
//! the binary weights format and the `gradcheck`, `train` and `eval`
//! commands.

pub mod commands;
pub mod config;
pub mod data;
pub mod weights;

pub use config::{parse_config, DataConfig, ExperimentConfig, LayerConfig, SgdSettings};
