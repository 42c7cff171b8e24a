//! Experiment drivers built on the core library: residual-method comparison,
//! contour uncertainty, training-density study, reporting and the
//! end-to-end pipeline.

pub mod config;
pub mod contour;
pub mod density;
pub mod pipeline;
pub mod report;
pub mod svg;
pub mod toy;

pub use config::RunConfig;
pub use pipeline::{run_all, RunSummary};
