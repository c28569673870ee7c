//! File formats, CLI and HTTP service around [`erp_core`].

pub mod cli;
mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod serve;

pub use error::{Error, Result};
