//! On-client explanation of cluster assignments: random-forest feature-group
//! importance, cluster size statistics, and value-sharing statistics.

mod forest;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use forest::{DecisionTree, RandomForest, RandomForestConfig, TrainingSet};

use crate::assignment::ClusterAssignment;
use crate::dataset::{ClientShard, MetaValue, MISSING};
use crate::metrics::{group_values, ClusterStats, MetricError, SCAFFOLD_GROUP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("shard has no metadata groups")]
    NoFeatures,
    #[error("length mismatch: {records} records, {labels} labels")]
    LengthMismatch { records: usize, labels: usize },
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),
    #[error("all feature importances are zero")]
    ZeroImportance,
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Design matrix built from a shard's metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMetadata {
    pub groups: Vec<String>,
    pub columns: Vec<String>,
    /// Index into `groups` for each column.
    pub column_group: Vec<usize>,
    /// Row-major, `n_rows × columns.len()`.
    pub data: Vec<f64>,
    pub n_rows: usize,
}

impl EncodedMetadata {
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_columns();
        &self.data[i * w..(i + 1) * w]
    }
}

/// One-hot for categorical groups (missing values get their own `NA`
/// column), pass-through for numeric groups. Missing numeric entries are
/// imputed with the group mean and marked in an extra `NA` indicator column.
///
/// Columns follow group order, then lexicographic value order.
pub fn encode_metadata(shard: &ClientShard) -> Result<EncodedMetadata, ExplainError> {
    let first = shard.records.first().ok_or(ExplainError::NoFeatures)?;
    let groups: Vec<String> = first.metadata.iter().map(|(g, _)| g.clone()).collect();
    if groups.is_empty() {
        return Err(ExplainError::NoFeatures);
    }
    let n = shard.len();
    let mut cols: Vec<(String, usize, Vec<f64>)> = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let vals: Vec<&MetaValue> = shard
            .records
            .iter()
            .map(|r| r.meta(g).unwrap_or(&MetaValue::Missing))
            .collect();
        let any_missing = vals.iter().any(|v| v.is_missing());
        if vals.iter().any(|v| matches!(v, MetaValue::Numeric(_))) {
            let present: Vec<f64> = vals
                .iter()
                .filter_map(|v| match v {
                    MetaValue::Numeric(x) => Some(*x),
                    _ => None,
                })
                .collect();
            let mean = present.iter().sum::<f64>() / present.len() as f64;
            let col = vals
                .iter()
                .map(|v| match v {
                    MetaValue::Numeric(x) => *x,
                    _ => mean,
                })
                .collect();
            cols.push((g.clone(), gi, col));
            if any_missing {
                let ind = vals.iter().map(|v| f64::from(u8::from(v.is_missing()))).collect();
                cols.push((format!("{g}={MISSING}"), gi, ind));
            }
        } else {
            let labels: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            let distinct: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
            for value in distinct {
                let col = labels.iter().map(|l| f64::from(u8::from(l == value))).collect();
                cols.push((format!("{g}={value}"), gi, col));
            }
        }
    }
    let w = cols.len();
    let mut data = vec![0.0; n * w];
    for (j, (_, _, col)) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            data[i * w + j] = *v;
        }
    }
    Ok(EncodedMetadata {
        groups,
        column_group: cols.iter().map(|c| c.1).collect(),
        columns: cols.into_iter().map(|c| c.0).collect(),
        data,
        n_rows: n,
    })
}

/// Random-forest importances summed per metadata group, normalized to 1.
///
/// Needs at least two clusters that each hold two or more records.
pub fn rf_feature_group_importance(
    shard: &ClientShard,
    assignment: &ClusterAssignment,
    cfg: &RandomForestConfig,
) -> Result<BTreeMap<String, f64>, ExplainError> {
    if assignment.len() != shard.len() {
        return Err(ExplainError::LengthMismatch {
            records: shard.len(),
            labels: assignment.len(),
        });
    }
    let sizes = assignment.cluster_sizes();
    let usable = sizes.iter().filter(|&&s| s >= 2).count();
    if usable < 2 {
        return Err(ExplainError::DegenerateTarget(format!(
            "{usable} clusters with at least 2 records"
        )));
    }
    let enc = encode_metadata(shard)?;
    let data = TrainingSet {
        n_features: enc.n_columns(),
        x: &enc.data,
        y: &assignment.labels,
        n_classes: sizes.len(),
    };
    let forest = RandomForest::fit(data, cfg)?;
    let mut per_group = vec![0.0; enc.groups.len()];
    for (imp, &g) in forest.feature_importances().iter().zip(&enc.column_group) {
        per_group[g] += imp;
    }
    let total: f64 = per_group.iter().sum();
    if total <= 0.0 {
        return Err(ExplainError::ZeroImportance);
    }
    Ok(enc
        .groups
        .into_iter()
        .zip(per_group)
        .map(|(g, v)| (g, v / total))
        .collect())
}

pub fn cluster_statistics(assignment: &ClusterAssignment) -> ClusterStats {
    ClusterStats::from_sizes(&assignment.cluster_sizes())
}

/// How many molecules share each value of a feature group.
#[derive(Debug, Clone, PartialEq)]
pub struct SharingStats {
    pub unique_values: usize,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

pub fn sharing_stats<S: AsRef<str>>(values: &[S]) -> SharingStats {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v.as_ref()).or_default() += 1;
    }
    SharingStats {
        unique_values: counts.len(),
        mean: if counts.is_empty() {
            0.0
        } else {
            values.len() as f64 / counts.len() as f64
        },
        min: counts.values().copied().min().unwrap_or(0),
        max: counts.values().copied().max().unwrap_or(0),
    }
}

/// Sharing statistics for every metadata group plus the scaffold key.
/// Numeric groups are counted on their decile bins.
pub fn feature_sharing_statistics(
    shard: &ClientShard,
) -> Result<BTreeMap<String, SharingStats>, ExplainError> {
    let first = shard.records.first().ok_or(MetricError::Empty)?;
    let mut groups: Vec<&str> = first.metadata.iter().map(|(g, _)| g.as_str()).collect();
    if !groups.contains(&SCAFFOLD_GROUP) {
        groups.push(SCAFFOLD_GROUP);
    }
    groups
        .into_iter()
        .map(|g| Ok((g.to_owned(), sharing_stats(&group_values(&shard.records, g)?))))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overclustering {
    pub mean_cluster_size: f64,
    pub mean_sharing: f64,
    /// `mean_cluster_size / mean_sharing`.
    pub ratio: f64,
    pub flagged: bool,
}

/// Flags a partition whose mean cluster size is strictly below the mean
/// number of molecules sharing a value of `reference_group`.
pub fn overclustering_flag(
    assignment: &ClusterAssignment,
    shard: &ClientShard,
    reference_group: &str,
) -> Result<Overclustering, ExplainError> {
    if assignment.len() != shard.len() {
        return Err(ExplainError::LengthMismatch {
            records: shard.len(),
            labels: assignment.len(),
        });
    }
    let stats = cluster_statistics(assignment);
    let sharing = sharing_stats(&group_values(&shard.records, reference_group)?);
    Ok(overclustering_from_means(stats.n_clusters, stats.mean_size, sharing.mean))
}

pub fn overclustering_from_means(
    n_clusters: usize,
    mean_cluster_size: f64,
    mean_sharing: f64,
) -> Overclustering {
    let ratio = mean_cluster_size / mean_sharing;
    Overclustering {
        mean_cluster_size,
        mean_sharing,
        ratio,
        flagged: n_clusters > 1 && ratio < 1.0,
    }
}
