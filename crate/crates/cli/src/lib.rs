//! Configuration, data ingestion and subcommand execution for the `qudit` binary.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod ingest;
pub mod presets;
pub mod run;
