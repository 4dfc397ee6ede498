//! The matching engines: k-means, COP-k-means, and constrained deep embedded
//! clustering.

mod idec;
mod kmeans;

pub use idec::{
    cl_loss, clustering_loss, idec_fit, idec_predict, ml_loss, soft_assign, soft_assign_backward,
    target_distribution, EpochStats, IdecConfig, IdecModel, IdecTraining,
};
pub use kmeans::{cop_kmeans_fit, kmeans_fit, kmeans_fit_traced, kmeans_predict, KMeansModel};

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch { context: &'static str, expected: String, found: String },
    #[error("constraints are infeasible: no valid cluster for point {point}")]
    Infeasible { point: usize },
    #[error("non-finite loss during {phase} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, phase: &'static str },
    #[error("index {index} out of bounds for {len} rows")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
