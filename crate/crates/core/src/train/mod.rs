//! Optimizers, the training loop, evaluation metrics, history export and
//! finite-difference gradient checks.

pub mod export;
pub mod gradcheck;
pub mod metrics;
pub mod optimizer;
pub mod trainer;

pub use export::{write_epoch_jsonl, write_history_jsonl, write_metrics_jsonl};
pub use gradcheck::{gradient_check_suite, CheckResult, GradCheck, GradCheckRegistry, SuiteReport};
pub use metrics::{evaluate, f1_score, metrics_from_confusion, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use optimizer::{
    optimizer_by_name, Adam, AdamSettings, Optimizer, OptimizerRegistry, OptimizerSpec, SgdMomentum,
};
pub use trainer::{train, train_with, EpochRecord, History, TrainConfig, Trainer};

/// Environment variable capping worker threads; `0` or unset means one per core.
pub const THREADS_ENV: &str = "TORSONET_THREADS";

/// Sizes the global worker pool from [`THREADS_ENV`]. Has no effect once the
/// pool exists.
pub fn init_threads_from_env() -> crate::Result<()> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            crate::Error::Argument(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))
        })?,
        Err(_) => 0,
    };
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
