//! Simulation scenarios, baselines and the replicate harness.
//!
//! Each replicate draws fresh data, runs every method on the sources and the
//! target features, and only then scores the predictions against the sealed
//! target outcomes. Ratios are reported as `log(RMSE_method / RMSE_merged_ols)`.

mod baselines;
mod experiment;
mod scenario;

pub use baselines::{design_matrix, merge_da, merged_ols, stack_ols, wls, LinearFit};
pub use experiment::{
    default_sim_da, read_results_csv, run_experiment, summarize, write_results_csv, ExperimentConfig, ExperimentResult,
    LabelAudit, Method, MethodSummary, ResultRow, CSV_HEADER,
};
pub use scenario::{generate, oracle_weights, Convention, DomainParams, Scenario, ScenarioSpec, SealedLabels, SimData};
