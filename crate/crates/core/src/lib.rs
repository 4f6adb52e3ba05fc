//! Few-shot classification over pre-extracted embedding vectors.
//!
//! The library evaluates episodic N-way K-shot tasks with three classifiers:
//!
//! - **inductive** — cosine similarity between a query and each class
//!   prototype (the mean of that class's support vectors);
//! - **cbm** — a cooperative bi-path score that mixes the inductive
//!   similarity with a transductive one: queries and prototypes are first
//!   described by their similarity distributions over a set of base-class
//!   mean vectors, and those distributions are compared instead of the raw
//!   vectors;
//! - **cbm-lle** — the same bi-path score with the transductive path running
//!   in a locally-linear-embedding reduction of the base matrix, extended
//!   out-of-sample through reconstruction weights.
//!
//! [`harness`] drives seeded, parallel episode evaluation with 95% confidence
//! intervals and paired hyperparameter sweeps; [`io`] defines the CBME binary
//! format for embedding datasets; [`synthetic`] generates deterministic
//! Gaussian-cluster datasets for desk-scale experiments.

pub mod cbm;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod inductive;
pub mod io;
pub mod lle;
pub mod metrics;
pub mod synthetic;

pub use cbm::{
    cbm_scores, combined_score, similarity_distribution, transductive_score, CbmConfig,
    DistributionSimilarity, SimilarityDistribution,
};
pub use embedding::{
    build_base_matrix, gap, BaseMatrix, ClassGroup, EmbeddingDataset, EmbeddingVector, FeatureMap,
    Role,
};
pub use error::{CbmError, Result};
pub use harness::{
    evaluate, sample_episode, sweep, sweep_csv, Method, ProtocolConfig, Report, SweepGrid,
    SweepMethodKind,
};
pub use inductive::{
    class_prototype, classify, episode_prototypes, inductive_scores, Episode, Prototype,
};
pub use io::{load_dataset, save_dataset, CBME_MAGIC, CBME_VERSION};
pub use lle::{
    cbm_lle_scores, cbm_lle_scores_with_model, fit_lle, knn, local_weights, transform, LleConfig,
    LleModel, DEFAULT_LLE_REG,
};
pub use metrics::{
    cosine, dense_classification_loss, neg_euclidean, neg_kl, softmax, LossInputs, Similarity,
};
pub use synthetic::{generate_synthetic, SyntheticSpec};
