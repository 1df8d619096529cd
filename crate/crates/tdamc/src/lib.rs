//! Staged pipeline, file formats and command line for the `tdamc-core`
//! algorithms.
//!
//! An artifact directory is built by the stages in [`pipeline::Stage`] and
//! checked by [`validate::validate`]. The hash manifest in `artifacts.json`
//! covers every file except the solver timing reports.

pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod validate;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use pipeline::{Pipeline, Stage};
