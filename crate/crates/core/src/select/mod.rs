//! KPI feature distillation: association weights from embedding similarity,
//! most-reliable-path impact, importance ranking and greedy selection
//! against a regression fit threshold.

mod association;
mod greedy;
mod regressor;

pub use association::{
    association_matrix, combine_similarity, impact, impacts_from, mean_similarity, rank_features, union_adjacency,
    ImportanceTable, SimilaritySource,
};
pub use greedy::{compression_ratio, greedy_select, FeatureDataset};
pub use regressor::{cost_report, fit_regressor, CostReport, RegressorSpec};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SelectError {
    #[error("KPI series has zero variance on the training split")]
    DegenerateTarget,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}
