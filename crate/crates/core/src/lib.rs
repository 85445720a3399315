//! Graph-regularized low-rank multi-label learning with missing labels.
//!
//! The pipeline has three stages:
//!
//! 1. [`descriptor`]: per-instance semantic descriptors built from concept
//!    scores (selected by mutual information against the observed labels) and
//!    labels pooled from visual neighbors.
//! 2. [`graph`]: a kNN semantic graph over those descriptors with dot-product
//!    edge weights, and its Laplacian.
//! 3. [`solver`]: an accelerated proximal gradient solver for
//!    `λ‖M‖_* + γ_s·tr(MᵀXᵀL_sXM) + ½‖R_Ω(XM) − Ỹ‖²_F`
//!    with singular value thresholding as the proximal step.
//!
//! [`ingest`] reads the input matrices and simulates missing labels, and
//! [`eval`] holds mean average precision, the baselines, the planted-model
//! generator and the cross-validation grid search.

pub mod datamodel;
pub mod descriptor;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod solver;

pub use datamodel::{
    apply_observation, FeatureMatrix, Model, ObservationMask, PartialLabels, SemanticGraph,
    SolverConfig,
};
pub use error::{Error, Result};
