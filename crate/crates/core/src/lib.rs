//! LLM-guided exemplar selection for few-shot human activity recognition.
//!
//! The pipeline turns inertial sensor windows into a unified feature space
//! (time-domain statistics, PCA, spectral PCA, LLM-designed semantic axes),
//! scores each training candidate with a hybrid of validation margin,
//! PageRank centrality, a hubness penalty, and an LLM-derived semantic
//! prior, selects per-class exemplars by greedy facility location, trains
//! small classifiers behind a static/dynamic gate, and evaluates everything
//! with macro-F1 comparison, ablation, and timing harnesses.
//!
//! Modules follow the pipeline stages:
//!
//! - [`datastore`]: UCI-HAR ingestion, subject-wise splits, synthetic fixtures
//! - [`featurizer`]: feature construction and standardization
//! - [`knowledge`]: validated LLM knowledge priors and semantic feature specs
//! - [`llm_bridge`]: prompt construction, chat-completions transport, caching
//! - [`simgraph`]: class-conditional mutual-kNN graphs, PageRank, hubness
//! - [`scorer`]: hybrid candidate scoring
//! - [`selector`]: facility-location selection plus baseline strategies
//! - [`models`]: cosine kNN, logistic regression, Gaussian naive Bayes, ML gate
//! - [`evalbench`]: metrics, comparison/ablation/timing harnesses
//! - [`acceptance`]: the release acceptance suite driven by `har-select check`

// Indexwise loops are the clearest way to write most of the dense numeric
// kernels in this crate.
#![allow(clippy::needless_range_loop)]

pub mod acceptance;
pub mod cli;
pub mod datastore;
pub mod evalbench;
pub mod featurizer;
pub mod knowledge;
pub mod linalg;
pub mod llm_bridge;
pub mod models;
pub mod scorer;
pub mod selector;
pub mod simgraph;

pub use datastore::Activity;
pub use featurizer::FeatureMatrix;
