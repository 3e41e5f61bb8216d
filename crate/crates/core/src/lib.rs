//! Quantum reservoir computing for molecular property prediction.
//!
//! The crate simulates a chain of neutral atoms driven by a global Rabi field
//! and a data-dependent local detuning, reads out one- and two-body Pauli-Z
//! expectation values at fixed snapshot times, and uses those traces as
//! feature embeddings for classical regressors. Around that core it carries
//! the classical toolkit needed for the full workflow: dataset ingestion and
//! standardization, a small regressor suite, Kernel SHAP feature selection,
//! k-means stratified subsampling, and a 2D projection plus SVM
//! classification task.
//!
//! Physical units throughout: time in µs, angular frequencies in rad/µs,
//! distances in µm.

pub mod analysis;
pub mod dataset;
pub mod embedding;
mod error;
pub mod feature_select;
pub mod regressors;
pub mod reservoir;
pub mod seed;
pub mod subsample;

pub use error::{Error, Result};

pub use analysis::{
    classification_metrics, export_for_projection, median_binarize, pca_project, svm_train,
    BinaryLabels, ClassificationMetrics, Projection2D, SvmKernel, SvmModel, SvmParams,
};
pub use dataset::{
    generate_synthetic, load_csv, summarize, CsvSchema, DataSummary, MolecularDataset, Relation,
    StandardizationParams,
};
pub use embedding::{
    embed_dataset, embed_record, encode, fit_scaler, ColumnLabel, EmbeddingMatrix, EmbeddingMode,
    FeatureScaler,
};
pub use feature_select::{
    kernel_shap, rank_features, select_top_k, Attribution, FeatureRanking, ShapConfig,
};
pub use regressors::{mse, train, RegressorKind, RegressorSpec, TrainedModel};
pub use reservoir::{
    build_hamiltonian, evolve, expect_z, expect_zz, snapshot_observables, DetuningPattern,
    HamiltonianRep, ObservableKind, ObservableTrace, QuantumState, ReservoirConfig,
};
pub use subsample::{kmeans, make_subsamples, stratified_split, ClusterModel, SubsamplePlan};

/// Dense real matrix used for feature tables, embeddings and projections.
pub type Matrix = nalgebra::DMatrix<f64>;
