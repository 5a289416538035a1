//! Training runs, the λ ablation, cross-dataset evaluation and report files.

mod config;
mod cross;
mod optim;
mod report;
mod train;

pub use config::{ExperimentConfig, SelectMetric, OUT_ROOT_ENV};
pub use cross::{
    ablate_lambda, cross_evaluate, default_lambda_grid, lambda_dir, select_lambda, Ablation, CrossEvalMatrix,
};
pub use optim::Adam;
pub use report::{curve_csv, emit_reports};
pub use train::{
    batch_schedule, evaluate_model, generalization_delta, load_dataset, tagset_for, train, train_on, DevPoint,
    RunRecord, Trainer, CHECKPOINT_FILE, RECORD_FILE, RESOLVED_CONFIG_FILE, TIMING_FILE,
};

#[cfg(test)]
mod tests;
