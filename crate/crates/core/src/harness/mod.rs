//! Experiment harness: scenario configuration, the per-epoch simulation
//! loop, accuracy / resolution / divergence / overhead metrics, CSV export
//! and Monte Carlo sweeps.

mod config;
mod export;
mod metrics;
mod record;
mod runner;
mod study;
mod summary;

pub use config::{
    DbscanConfig, EmSection, ExperimentConfig, GridConfig, KlConfig, Mode, PriorConfig, RadarConfig, RadarModelConfig,
    ScenarioConfig,
};
pub use export::{export_csv, read_summary_csv, write_epoch_csv, write_summary_csv, EPOCH_COLUMNS};
pub use metrics::{
    associate, compute_mae, quantile_sorted, unresolved_by_position, unresolved_probability, Mae, Quantiles,
};
pub use record::{EpochRecord, RadarEpoch, TruthState};
pub use runner::{grid_path, run_experiment, run_experiment_with, RunOptions, RunOutput};
pub use study::{kl_study, sweep, KlStudy, SweepResult};
pub use summary::{MetricsRecord, RadarMetrics};
