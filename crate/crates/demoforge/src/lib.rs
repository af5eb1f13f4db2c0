//! File formats, reports, and the command line for `demoforge-core`.
//!
//! The core crate works on byte slices and in-memory values. This crate adds
//! streaming reads from files, the JSON document format (optionally gzipped),
//! atomic output files, CSV reports, and the `demoforge` binary.

pub mod cli;
pub mod files;
pub mod json;
pub mod report;

pub use files::{parse_demo_file, ReadSource};
pub use json::{emit_json, parse_json};
