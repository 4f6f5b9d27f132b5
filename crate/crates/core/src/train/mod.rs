//! Training loop, evaluation metrics, cross-validation and the
//! loss-function ablation grid.

mod cv;
mod dataset;
mod fit;
mod metrics;
mod optim;

pub use cv::{
    cross_validate, cross_validate_with, mean_std, median, run_ablation, run_cell, AblationCell, AblationReport,
    AblationRun, CvReport, FoldResult, Summary,
};
pub use dataset::{FeatureSet, Standardization, Standardizer};
pub use fit::{epoch_order, evaluate, fit, predict, train, TrainConfig, TrainedModel};
pub use metrics::{argmax, confusion_csv, Metrics};
pub use optim::{Optimizer, OptimizerKind};

/// Version of every JSON report written by this module.
pub const SCHEMA_VERSION: u32 = 1;
