//! Scenario registry, experiment orchestration and result files.

pub mod config;
pub mod output;
pub mod runner;
pub mod scenario;

pub use config::{ConfigFile, ExperimentConfig};
pub use runner::{
    aggregate, cross_alpha_report, run_convergence, run_cross_alpha, run_pathwise, run_study, run_weak, weak_report,
    ConvergenceRun, CrossAlphaReport, PathwiseRun, Study, StudyOptions, StudyReport, WeakReport, WeakRun,
};
pub use scenario::{ScenarioSpec, SCENARIOS};
