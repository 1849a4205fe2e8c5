//! Federated clustering and diversity analysis for molecular fingerprint data.
//!
//! The crate simulates a server/clients federation in-process and provides
//! three federated clustering protocols (k-means, PCA followed by k-means,
//! entropy-bit LSH) with their centralized and random baselines, plus
//! mathematical and scaffold-aware evaluation metrics and on-client
//! explainability tooling.

pub mod assignment;
pub mod cli;
pub mod dataset;
pub mod experiments;
pub mod explain;
pub mod federation;
pub mod kmeans;
pub mod lsh;
pub mod metrics;
pub mod partition;
pub mod pca;
pub mod points;
pub mod seed;

pub use assignment::{ClusterAssignment, Method};
pub use dataset::{ClientShard, DatasetManifest, Fingerprint, MoleculeRecord};
pub use federation::{ExecutionMode, FederationConfig};
pub use points::Points;
