//! Link-prediction protocol: edge masking, negative sampling, similarity
//! scoring, top-k thresholding and the five-metric evaluation.

mod mask;
mod metrics;
mod scoring;

pub use mask::{mask_edges, sample_negatives, MaskedView};
pub use metrics::{evaluate, evaluate_view, MetricsReport, SliceEvaluation, ViewEvaluation};
pub use scoring::{correlation_matrix, cosine_matrix, predict_links, top_k_pairs, Cosine};

/// Published STREAM test-set row (accuracy, F1, AUC), for side-by-side display only.
pub const REFERENCE_ROW: ReferenceRow = ReferenceRow {
    accuracy: 0.960,
    precision: 0.880,
    recall: 0.880,
    f1: 0.880,
    auc: 0.928,
};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReferenceRow {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LinkPredError {
    #[error("slice {slice}: need {needed} negative pairs but only {available} non-edges exist")]
    InsufficientNonEdges {
        slice: usize,
        needed: usize,
        available: usize,
    },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
