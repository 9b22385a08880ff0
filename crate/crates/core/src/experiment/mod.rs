//! Config-driven experiments: build an instance, simulate, write artifacts.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{
    ArmSpec, ConfidenceSpec, ContextOrder, ExperimentConfig, InstanceSpec, PolicySpec, SourceSpec,
};
pub use output::{reaggregate, write_outputs};
pub use runner::{
    build_instance, run_experiment, run_on_instance, simulate_run, BuiltInstance, ExperimentResult,
    PolicyRuns, ResolvedPolicy, RunTrace,
};
