//! File formats, caching, parallel pipelines and the command line for
//! superpatch matching and exemplar label fusion.
//!
//! The algorithms live in [`superpatch_core`]; this crate adds everything
//! that needs `std`: image and label-map IO, decomposition sidecars,
//! JSON-lines ANN fields, probability maps, the feature cache, run
//! configuration, library manifests, and the `superpatch` binary's commands.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod config;
pub mod error;
pub mod formats;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use error::{CliError, CliResult};
pub use superpatch_core as core;
