//! Config-driven experiment runner.
//!
//! A TOML config names one experiment kind and its parameters. [`run`]
//! validates it, dispatches to the library, and writes CSV data, a JSON
//! summary carrying the config digest and acceptance verdicts, and a
//! [`RunRecord`] into `<root>/<run id>/`. Identical configs produce
//! byte-identical CSVs and summaries regardless of the worker-thread count.

pub mod config;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod record;

pub use config::{load, parse_str, validate_file, Experiment, ExperimentConfig};
pub use error::{HarnessError, Issue, Result, ValidationReport};
pub use experiments::Verdict;
pub use plot::emit_plot_data;
pub use record::{list, load_record, run, run_with_threads, RunRecord};

/// Environment variable holding the output root.
pub const OUTPUT_ROOT_ENV: &str = "RATE_HARNESS_OUT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CRITERION_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;
