//! Experiment orchestration: config files, the run loop, Monte Carlo
//! batches, metrics and CSV traces.

pub mod config;
pub mod metrics;
pub mod montecarlo;
pub mod run;
pub mod trace;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use metrics::{compute_metrics, Metrics, SpikeStat};
pub use montecarlo::{monte_carlo, McError, McOptions, McReport};
pub use run::{
    run_experiment, run_with_schedule, Mode, Phase, RunError, RunResult, StepObserver, TraceOptions,
};
pub use trace::{RunTrace, TraceRow};
