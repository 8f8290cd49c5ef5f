//! Configuration, orchestration and run records for the `condensim` binary.

pub mod config;
pub mod run;
pub mod units;
