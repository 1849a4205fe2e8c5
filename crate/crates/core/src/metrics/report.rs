use std::collections::BTreeMap;

use super::{
    calinski_harabasz, davies_bouldin, group_values, scaffold_kld_per_cluster, sf_icf,
    sf_icf_per_cluster, silhouette_euclidean, silhouette_tanimoto, Metric, MetricError,
    SCAFFOLD_GROUP,
};
use crate::assignment::ClusterAssignment;
use crate::dataset::ClientShard;
use crate::points::Points;

/// Feature space for the Euclidean metrics. It must be the space the
/// clustering ran in.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSpace<'a> {
    Raw,
    Projected(&'a Points),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStats {
    pub n_clusters: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub mean_size: f64,
}

impl ClusterStats {
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let nonempty: Vec<usize> = sizes.iter().copied().filter(|&s| s > 0).collect();
        let total: usize = nonempty.iter().sum();
        Self {
            n_clusters: nonempty.len(),
            min_size: nonempty.iter().copied().min().unwrap_or(0),
            max_size: nonempty.iter().copied().max().unwrap_or(0),
            mean_size: if nonempty.is_empty() {
                0.0
            } else {
                total as f64 / nonempty.len() as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterScore {
    pub key: String,
    pub size: usize,
    pub sf_icf: f64,
    pub kld: f64,
}

/// Metric values for one client, or the cross-client mean when `client_id`
/// is `None`. Undefined values are `None` with a reason in `flags`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub client_id: Option<usize>,
    pub silhouette_euclidean: Option<f64>,
    pub davies_bouldin: Option<f64>,
    pub calinski_harabasz: Option<f64>,
    pub silhouette_tanimoto: Option<f64>,
    pub sf_icf: Option<f64>,
    pub per_feature_group_ficf: BTreeMap<String, f64>,
    pub cluster_stats: ClusterStats,
    pub flags: BTreeMap<String, String>,
    pub clusters: Vec<ClusterScore>,
}

impl MetricsReport {
    pub fn value(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::SilhouetteEuclidean => self.silhouette_euclidean,
            Metric::DaviesBouldin => self.davies_bouldin,
            Metric::CalinskiHarabasz => self.calinski_harabasz,
            Metric::SilhouetteTanimoto => self.silhouette_tanimoto,
            Metric::SfIcf => self.sf_icf,
        }
    }

    fn slot(&mut self, metric: Metric) -> &mut Option<f64> {
        match metric {
            Metric::SilhouetteEuclidean => &mut self.silhouette_euclidean,
            Metric::DaviesBouldin => &mut self.davies_bouldin,
            Metric::CalinskiHarabasz => &mut self.calinski_harabasz,
            Metric::SilhouetteTanimoto => &mut self.silhouette_tanimoto,
            Metric::SfIcf => &mut self.sf_icf,
        }
    }

    fn record(&mut self, metric: Metric, result: Result<f64, MetricError>) {
        match result {
            Ok(v) if v.is_finite() => *self.slot(metric) = Some(v),
            Ok(v) => {
                self.flags.insert(metric.to_string(), format!("non-finite value {v}"));
            }
            Err(e) => {
                self.flags.insert(metric.to_string(), e.to_string());
            }
        }
    }
}

/// Computes every metric for one client's shard.
pub fn evaluate(
    shard: &ClientShard,
    assignment: &ClusterAssignment,
    space: FeatureSpace<'_>,
) -> Result<MetricsReport, MetricError> {
    let n = shard.len();
    if assignment.len() != n {
        return Err(MetricError::LengthMismatch {
            expected: n,
            found: assignment.len(),
        });
    }
    if n == 0 {
        return Err(MetricError::Empty);
    }
    let raw;
    let points = match space {
        FeatureSpace::Raw => {
            raw = Points::from_shard(shard);
            &raw
        }
        FeatureSpace::Projected(p) => {
            if p.len() != n {
                return Err(MetricError::LengthMismatch {
                    expected: n,
                    found: p.len(),
                });
            }
            p
        }
    };
    let labels = &assignment.labels;
    let mut report = MetricsReport {
        client_id: Some(shard.client_id),
        silhouette_euclidean: None,
        davies_bouldin: None,
        calinski_harabasz: None,
        silhouette_tanimoto: None,
        sf_icf: None,
        per_feature_group_ficf: BTreeMap::new(),
        cluster_stats: ClusterStats::from_sizes(&assignment.cluster_sizes()),
        flags: BTreeMap::new(),
        clusters: Vec::new(),
    };
    report.record(Metric::SilhouetteEuclidean, silhouette_euclidean(points, labels));
    report.record(Metric::DaviesBouldin, davies_bouldin(points, labels));
    report.record(Metric::CalinskiHarabasz, calinski_harabasz(points, labels));
    report.record(
        Metric::SilhouetteTanimoto,
        silhouette_tanimoto(&shard.fingerprints(), labels),
    );

    let scaffolds: Vec<&str> = shard.records.iter().map(|r| r.scaffold.as_str()).collect();
    report.record(Metric::SfIcf, sf_icf(&scaffolds, labels));

    let mut groups: Vec<&str> = shard.records[0]
        .metadata
        .iter()
        .map(|(g, _)| g.as_str())
        .collect();
    if !groups.contains(&SCAFFOLD_GROUP) {
        groups.push(SCAFFOLD_GROUP);
    }
    for g in groups {
        let values = group_values(&shard.records, g)?;
        report
            .per_feature_group_ficf
            .insert(g.to_owned(), sf_icf(&values, labels)?);
    }

    let per = sf_icf_per_cluster(&scaffolds, labels)?;
    let kld = scaffold_kld_per_cluster(&scaffolds, labels)?;
    let sizes = assignment.cluster_sizes();
    report.clusters = (0..sizes.len())
        .map(|c| ClusterScore {
            key: assignment.cluster_keys[c].clone(),
            size: sizes[c],
            sf_icf: per[c],
            kld: kld[c],
        })
        .collect();
    Ok(report)
}

/// Unweighted mean across clients of each metric over the clients where it is
/// defined. Cluster statistics pool all per-client clusters.
pub fn aggregate_reports(reports: &[MetricsReport]) -> Result<MetricsReport, MetricError> {
    if reports.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut out = MetricsReport {
        client_id: None,
        silhouette_euclidean: None,
        davies_bouldin: None,
        calinski_harabasz: None,
        silhouette_tanimoto: None,
        sf_icf: None,
        per_feature_group_ficf: BTreeMap::new(),
        cluster_stats: ClusterStats {
            n_clusters: 0,
            min_size: 0,
            max_size: 0,
            mean_size: 0.0,
        },
        flags: BTreeMap::new(),
        clusters: Vec::new(),
    };
    for m in Metric::ALL {
        let vals: Vec<f64> = reports.iter().filter_map(|r| r.value(m)).collect();
        if vals.is_empty() {
            out.flags.insert(m.to_string(), "undefined on every client".into());
        } else {
            *out.slot(m) = Some(vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (g, v) in &r.per_feature_group_ficf {
            groups.entry(g).or_default().push(*v);
        }
    }
    out.per_feature_group_ficf = groups
        .into_iter()
        .map(|(g, v)| (g.to_owned(), v.iter().sum::<f64>() / v.len() as f64))
        .collect();

    let stats: Vec<&ClusterStats> = reports.iter().map(|r| &r.cluster_stats).collect();
    let n_clusters: usize = stats.iter().map(|s| s.n_clusters).sum();
    let records: f64 = stats.iter().map(|s| s.mean_size * s.n_clusters as f64).sum();
    out.cluster_stats = ClusterStats {
        n_clusters,
        min_size: stats.iter().map(|s| s.min_size).min().unwrap_or(0),
        max_size: stats.iter().map(|s| s.max_size).max().unwrap_or(0),
        mean_size: if n_clusters == 0 {
            0.0
        } else {
            records / n_clusters as f64
        },
    };
    Ok(out)
}
