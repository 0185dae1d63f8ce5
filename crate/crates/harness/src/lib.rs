//! Experiment harness for the robust-reward learners: sweep configs,
//! seeded parallel runs, per-run CSV records, percentile-band aggregation,
//! SVG plots and named property suites.

pub mod aggregate;
pub mod config;
pub mod error;
pub mod mdp_file;
pub mod records;
pub mod seeds;
pub mod suites;
pub mod svg;
pub mod sweep;

pub use config::{ConfigError, SweepConfig};
pub use error::{HarnessError, Result};
