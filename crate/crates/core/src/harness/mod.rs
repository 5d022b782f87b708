//! Experiment configuration, the training loop and its artifacts.

pub mod config;
pub mod output;
pub mod runner;
pub mod stats;

pub use config::{
    default_mapping, Budget, BudgetUnit, EnvironmentKind, ExperimentConfig, ProgressionConfig,
    Spacing,
};
pub use output::{
    emit_outputs, read_trace_csv, render_curves_svg, render_trace_svg, write_trace_csv,
};
pub use runner::{
    assign_worker_params, evaluate, run_experiment, run_worker_episode, EpisodeContext,
    EpisodeRecord, EvalRow, ExperimentPlan, ExperimentResult, LearnerHandle, ParamBounds, SeedRun,
    Summary, TraceRow, WorkerParam, WorkerState,
};
pub use stats::{mean_ci95, spearman, MeanCi};
