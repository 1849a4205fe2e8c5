//! Evaluation metrics: geometric validity indices, the SF-ICF family, scaffold
//! KL divergence, and the random-label baseline.

mod report;
mod sficf;
mod validity;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

pub use report::{aggregate_reports, evaluate, ClusterScore, ClusterStats, FeatureSpace, MetricsReport};
pub use sficf::{
    decile_bins, group_values, inverse_cluster_frequency, scaffold_frequency, scaffold_kld,
    scaffold_kld_per_cluster, sf_icf, sf_icf_per_cluster, x_f_icf, SCAFFOLD_GROUP,
};
pub use validity::{
    calinski_harabasz, davies_bouldin, silhouette, silhouette_euclidean, silhouette_tanimoto,
    tanimoto_matrix,
};

use crate::assignment::{ClusterAssignment, Method};
use crate::seed::rng_from;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("undefined for a single cluster")]
    SingleCluster,
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("empty input")]
    Empty,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unknown feature group {0:?}")]
    UnknownGroup(String),
    #[error("unknown cluster {0}")]
    UnknownCluster(usize),
    #[error("n_clusters must be >= 1")]
    NoClusters,
}

pub(crate) fn distinct_labels(labels: &[usize]) -> usize {
    labels.iter().collect::<HashSet<_>>().len()
}

/// Metrics that take part in reports and rankings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    SilhouetteEuclidean,
    DaviesBouldin,
    CalinskiHarabasz,
    SilhouetteTanimoto,
    SfIcf,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::SilhouetteEuclidean,
        Metric::DaviesBouldin,
        Metric::CalinskiHarabasz,
        Metric::SilhouetteTanimoto,
        Metric::SfIcf,
    ];

    /// Default ranking set; the Tanimoto silhouette is reported but not ranked.
    pub const RANKED: [Metric; 4] = [
        Metric::SilhouetteEuclidean,
        Metric::DaviesBouldin,
        Metric::CalinskiHarabasz,
        Metric::SfIcf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::SilhouetteEuclidean => "silhouette_euclidean",
            Metric::DaviesBouldin => "davies_bouldin",
            Metric::CalinskiHarabasz => "calinski_harabasz",
            Metric::SilhouetteTanimoto => "silhouette_tanimoto",
            Metric::SfIcf => "sf_icf",
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::DaviesBouldin)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// Uniform i.i.d. cluster labels in `0..n_clusters`.
pub fn random_assignment(
    n_records: usize,
    n_clusters: usize,
    seed: u64,
) -> Result<ClusterAssignment, MetricError> {
    if n_clusters == 0 {
        return Err(MetricError::NoClusters);
    }
    let mut rng = rng_from(seed);
    let raw: Vec<usize> = (0..n_records).map(|_| rng.random_range(0..n_clusters)).collect();
    Ok(ClusterAssignment::from_labels(Method::Random, &raw).with_provenance("n_clusters", n_clusters))
}
