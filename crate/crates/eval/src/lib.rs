//! Evaluation harness: synthetic corpus, negative-window sampling,
//! estimators and the benchmark suites behind the results report.

pub mod report;
pub mod sampler;
pub mod splice;
pub mod stats;
pub mod suites;
pub mod synth;

pub use report::{emit_report, read_report, Report, SCHEMA_VERSION};
pub use suites::{EvalConfig, EvalError, Sections, Suite};
