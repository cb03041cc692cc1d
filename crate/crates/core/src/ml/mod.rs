//! Datasets, partitioners and the four bagging operations
//! (`Train`, `Resample`, `Aggregate`, `Metric`) over a reference CART learner.

mod bagging;
mod dataset;
mod metric;
mod model;
mod split;
mod synth;
mod tree;

pub use bagging::{aggregate, resample, resample_with};
pub use dataset::{Dataset, DatasetRole};
pub use metric::{accuracy, Accuracy, MetricFloor};
pub use model::{model_hash_of, TrainedModel};
pub use split::{
    assign_iid_parts, largest_remainder, split_dirichlet, split_holdout, split_iid, Heterogeneity, SplitPlan,
    DIRICHLET_RETRIES,
};
pub use synth::synthesize_dataset;
pub use tree::{train, DecisionTree, Node, TreeParams};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("feature matrix has {rows} rows but {labels} labels")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("label {label} is not below the class count {classes}")]
    LabelOutOfRange { label: u32, classes: u32 },
    #[error("invalid learner parameters: {0}")]
    InvalidParams(&'static str),
    #[error("infeasible split plan: {0}")]
    InfeasiblePlan(&'static str),
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(&'static str),
    #[error("class {0} has no private samples")]
    ClassWithoutPrivateSamples(u32),
    #[error("a miner received no samples after {0} Dirichlet draws")]
    EmptyMiner(u32),
    #[error("no models to aggregate")]
    NoModels,
    #[error("prediction lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("datasets are incompatible: {0}")]
    Incompatible(&'static str),
}
