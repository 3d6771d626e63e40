//! Evaluation protocols: dataset splits, accuracy metrics, the nearest-neighbor
//! baseline, reconstruction-error anomaly scores, ROC AUC and the holdout-class
//! experiment.

mod auc;
mod baseline;
mod experiments;
mod metrics;
mod report;
mod split;

pub use auc::{roc_auc, roc_curve};
pub use baseline::{NearestNeighbor, Neighbor};
pub use experiments::{
    anomaly_scores, classification_experiment, holdout_experiment, ClassificationConfig,
    ClassificationOutcome, HoldoutConfig, HoldoutOutcome, Scorer,
};
pub use metrics::{evaluate_classifier, EvaluationReport, RunMetrics};
pub use report::{boxplot_svg, confusion_svg, report_csv};
pub use split::{split_dataset, Partition};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::MelSpectrogram;
use crate::nnet::NnetError;

pub type ClassId = usize;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] NnetError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Lab,
    Field,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample_id: u64,
    pub label: ClassId,
    pub source: SampleSource,
    pub mel: MelSpectrogram,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyMethod {
    Autoencoder,
    NearestNeighbor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    pub sample_id: u64,
    pub score: f64,
    pub method: AnomalyMethod,
}
