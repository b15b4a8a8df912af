//! File formats, configuration, verification and the command-line front end
//! for weight-sampled networks. The numerics live in `wsnet-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod model;
pub mod report;
pub mod verify;

pub use config::{parse_config, Config};
pub use dataset::{load_dataset, save_dataset, synth_dataset, Dataset};
pub use error::{Error, FormatError, Result};
pub use model::{load_model, quantize_model, save_model, Model};
