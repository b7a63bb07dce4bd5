//! Benchmark harness around the `ehmc` samplers: warmup, batch learning,
//! production runs and metrics over seeded (p0, replication, sampler) grids.

pub mod config;
pub mod experiment;
pub mod model;
pub mod output;
pub mod seed;
pub mod summary;

pub use experiment::{run_experiment, Experiment, ExperimentSpec, MassChoice, ResultRow};
pub use model::{AnyModel, ModelKind, ModelSpec};
pub use output::Format;
