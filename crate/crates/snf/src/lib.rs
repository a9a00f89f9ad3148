//! File formats, TCP delivery and experiment driver for streamable neural
//! fields. The numerical core lives in [`snf_core`], re-exported here as
//! [`core`].

pub use snf_core as core;

pub mod config;
mod error;
pub mod media;
pub mod pnm;
pub mod run;
pub mod transport;

pub use config::{ConfigError, RunConfig};
pub use error::{Result, SnfError};
