//! Two-phase training protocol: pre-train a target-only baseline, then
//! retrain with instance infusion, evaluated by k-fold cross-validation.

mod config;
mod experiment;
mod metrics;
mod model;
mod optim;
mod split;
mod train;

pub use config::TrainingConfig;
pub use experiment::{
    cross_validate, mean_accuracy, outcome_rows, sweep, CvPlan, FoldOutcome, InfusionVariant, SourcePlan,
};
pub use metrics::{evaluate, evaluate_with, write_metrics_csv, ClassScores, Metrics, MetricsRow};
pub use model::{ModelParams, Phase};
pub use optim::{lr_at, Adam, RowAdam};
pub use split::{fraction_subset, kfold_split};
pub use train::{
    build_retriever, export_embeddings, infuse_train, infuse_train_with_report, pretrain,
    pretrain_with_report, Predictor, Retriever, TrainReport,
};
