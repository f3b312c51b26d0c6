//! Config-driven experiment runner for `ctalab`: JSON config in, CSV data, JSON reports and a
//! hashed run manifest out.

pub mod config;
pub mod run;

pub use config::{parse, ExperimentConfig, Task};
pub use run::{execute, run, validate_only, Manifest};
