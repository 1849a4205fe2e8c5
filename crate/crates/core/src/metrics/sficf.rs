//! Scaffold-frequency / inverse-cluster-frequency scores and scaffold KLD.
//!
//! For a value `s` (a scaffold, or any categorical feature) and a cluster `c`:
//!
//! * `SF(s, c)  = |{x ∈ c : x has s}| / |c|`
//! * `ICF(s, C) = ln(|C| / #clusters containing s) / ln(|C|)`, and 0 when
//!   `|C| = 1`
//! * `SF-ICF    = Σ_c |c|/N · Σ_{distinct s in c} SF(s, c) · ICF(s, C)`
//!
//! The score lies in `[0, 1]`: 1 when every cluster is pure in a value that no
//! other cluster contains, 0 when every value occurs in every cluster.

use std::collections::{BTreeMap, HashMap};

use super::{distinct_labels, MetricError};
use crate::dataset::{MetaValue, MoleculeRecord};

pub const SCAFFOLD_GROUP: &str = "scaffold";

/// Value counts per cluster, indexed by label.
struct Composition<'a> {
    sizes: Vec<usize>,
    counts: Vec<BTreeMap<&'a str, usize>>,
    clusters_with: HashMap<&'a str, usize>,
    n_clusters: usize,
    total: usize,
}

impl<'a> Composition<'a> {
    fn new<S: AsRef<str>>(values: &'a [S], labels: &[usize]) -> Result<Self, MetricError> {
        if values.len() != labels.len() {
            return Err(MetricError::LengthMismatch {
                expected: values.len(),
                found: labels.len(),
            });
        }
        if values.is_empty() {
            return Err(MetricError::Empty);
        }
        let n_labels = labels.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; n_labels];
        let mut counts: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); n_labels];
        for (v, &l) in values.iter().zip(labels) {
            sizes[l] += 1;
            *counts[l].entry(v.as_ref()).or_default() += 1;
        }
        let mut clusters_with = HashMap::new();
        for c in &counts {
            for v in c.keys() {
                *clusters_with.entry(*v).or_default() += 1;
            }
        }
        Ok(Self {
            sizes,
            counts,
            clusters_with,
            n_clusters: distinct_labels(labels),
            total: values.len(),
        })
    }

    fn icf(&self, value: &str) -> f64 {
        let df = self.clusters_with.get(value).copied().unwrap_or(0);
        if self.n_clusters <= 1 || df == 0 {
            return 0.0;
        }
        let c = self.n_clusters as f64;
        (c / df as f64).ln() / c.ln()
    }

    /// Inner sum of the score for one cluster (0 for absent labels).
    fn cluster_score(&self, label: usize) -> f64 {
        let size = self.sizes[label];
        if size == 0 {
            return 0.0;
        }
        self.counts[label]
            .iter()
            .map(|(v, &n)| n as f64 / size as f64 * self.icf(v))
            .sum()
    }
}

/// `SF(value, cluster)`; 0 when the value is absent or the cluster is empty.
pub fn scaffold_frequency<S: AsRef<str>>(
    values: &[S],
    labels: &[usize],
    value: &str,
    cluster: usize,
) -> Result<f64, MetricError> {
    let comp = Composition::new(values, labels)?;
    let size = comp.sizes.get(cluster).copied().unwrap_or(0);
    if size == 0 {
        return Ok(0.0);
    }
    let n = comp.counts[cluster].get(value).copied().unwrap_or(0);
    Ok(n as f64 / size as f64)
}

/// `ICF(value, C)`.
pub fn inverse_cluster_frequency<S: AsRef<str>>(
    values: &[S],
    labels: &[usize],
    value: &str,
) -> Result<f64, MetricError> {
    Ok(Composition::new(values, labels)?.icf(value))
}

pub fn sf_icf<S: AsRef<str>>(values: &[S], labels: &[usize]) -> Result<f64, MetricError> {
    let comp = Composition::new(values, labels)?;
    // |c|/N · Σ (n_s/|c|) · ICF  ==  Σ n_s · ICF / N
    let weighted: f64 = comp
        .counts
        .iter()
        .flat_map(|c| c.iter().map(|(v, &n)| n as f64 * comp.icf(v)))
        .sum();
    Ok(weighted / comp.total as f64)
}

/// Per-cluster inner sums, indexed by label.
pub fn sf_icf_per_cluster<S: AsRef<str>>(
    values: &[S],
    labels: &[usize],
) -> Result<Vec<f64>, MetricError> {
    let comp = Composition::new(values, labels)?;
    Ok((0..comp.sizes.len()).map(|l| comp.cluster_score(l)).collect())
}

/// `D_KL(P(S | c) || P(S))` for every cluster label, natural log.
pub fn scaffold_kld_per_cluster<S: AsRef<str>>(
    values: &[S],
    labels: &[usize],
) -> Result<Vec<f64>, MetricError> {
    let comp = Composition::new(values, labels)?;
    let mut global: HashMap<&str, usize> = HashMap::new();
    for v in values {
        *global.entry(v.as_ref()).or_default() += 1;
    }
    let n = comp.total as f64;
    Ok((0..comp.sizes.len())
        .map(|l| {
            let size = comp.sizes[l] as f64;
            comp.counts[l]
                .iter()
                .map(|(v, &c)| {
                    let p_c = c as f64 / size;
                    let p = global[v] as f64 / n;
                    p_c * (p_c / p).ln()
                })
                .sum::<f64>()
                .max(0.0)
        })
        .collect())
}

pub fn scaffold_kld<S: AsRef<str>>(
    values: &[S],
    labels: &[usize],
    cluster: usize,
) -> Result<f64, MetricError> {
    scaffold_kld_per_cluster(values, labels)?
        .get(cluster)
        .copied()
        .ok_or(MetricError::UnknownCluster(cluster))
}

/// Rank-based decile of each numeric value among the present values;
/// `None` for missing entries.
pub fn decile_bins(values: &[Option<f64>]) -> Vec<Option<usize>> {
    let mut present: Vec<f64> = values.iter().flatten().copied().collect();
    present.sort_by(f64::total_cmp);
    let n = present.len();
    values
        .iter()
        .map(|v| {
            v.map(|x| {
                let below = present.partition_point(|p| *p < x);
                (10 * below / n).min(9)
            })
        })
        .collect()
}

/// Categorical view of one feature group: numeric groups become decile bins,
/// missing values become the category `NA`.
///
/// `"scaffold"` falls back to the records' scaffold keys when no metadata
/// group of that name exists.
pub fn group_values(records: &[MoleculeRecord], group: &str) -> Result<Vec<String>, MetricError> {
    let first = records.first().ok_or(MetricError::Empty)?;
    if first.meta(group).is_none() {
        if group == SCAFFOLD_GROUP {
            return Ok(records.iter().map(|r| r.scaffold.clone()).collect());
        }
        return Err(MetricError::UnknownGroup(group.to_owned()));
    }
    let raw: Vec<&MetaValue> = records
        .iter()
        .map(|r| r.meta(group).unwrap_or(&MetaValue::Missing))
        .collect();
    let numeric = raw.iter().any(|v| matches!(v, MetaValue::Numeric(_)));
    if numeric {
        let nums: Vec<Option<f64>> = raw
            .iter()
            .map(|v| match v {
                MetaValue::Numeric(x) => Some(*x),
                _ => None,
            })
            .collect();
        Ok(decile_bins(&nums)
            .into_iter()
            .map(|b| b.map_or_else(|| "NA".to_owned(), |b| format!("D{b}")))
            .collect())
    } else {
        Ok(raw.iter().map(|v| v.to_string()).collect())
    }
}

/// SF-ICF with scaffolds replaced by a metadata feature group.
pub fn x_f_icf(records: &[MoleculeRecord], labels: &[usize], group: &str) -> Result<f64, MetricError> {
    sf_icf(&group_values(records, group)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sf_examples() {
        let v = ["a", "a", "a", "b"];
        assert_eq!(scaffold_frequency(&v, &[0; 4], "a", 0).unwrap(), 0.75);
        assert_eq!(scaffold_frequency(&["a", "a"], &[0, 0], "a", 0).unwrap(), 1.0);
        assert_eq!(scaffold_frequency(&v, &[0; 4], "z", 0).unwrap(), 0.0);
    }

    #[test]
    fn icf_examples() {
        let v = ["a", "a", "b", "a"];
        assert_eq!(inverse_cluster_frequency(&v, &[0, 1, 2, 3], "a").unwrap(), (4.0f64 / 3.0).ln() / 4.0f64.ln());
        assert_eq!(inverse_cluster_frequency(&v, &[0, 1, 2, 3], "b").unwrap(), 1.0);
        let v = ["a", "a", "a", "a"];
        assert_eq!(inverse_cluster_frequency(&v, &[0, 1, 2, 3], "a").unwrap(), 0.0);
        let v = ["a", "a", "b", "b"];
        let icf = inverse_cluster_frequency(&v, &[0, 1, 2, 3], "a").unwrap();
        assert!((icf - 0.5).abs() < 1e-15);
        assert_eq!(inverse_cluster_frequency(&v, &[0; 4], "a").unwrap(), 0.0);
    }

    #[test]
    fn sf_icf_fixtures() {
        assert_eq!(sf_icf(&["a", "a", "b", "c"], &[0, 0, 1, 2]).unwrap(), 1.0);
        assert_eq!(sf_icf(&["a", "b", "a", "b"], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(sf_icf(&["s1", "s1", "s2", "s2"], &[0, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(sf_icf::<&str>(&[], &[]).unwrap_err(), MetricError::Empty);
    }

    #[test]
    fn per_cluster_scores_weight_to_the_total() {
        let v = ["a", "a", "b", "c", "c", "b"];
        let l = [0, 0, 0, 1, 2, 2];
        let per = sf_icf_per_cluster(&v, &l).unwrap();
        let sizes = [3.0, 1.0, 2.0];
        let total: f64 = per.iter().zip(sizes).map(|(s, n)| s * n / 6.0).sum();
        assert!((total - sf_icf(&v, &l).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn kld_examples() {
        let v = ["a", "b", "a", "b"];
        let kld = scaffold_kld_per_cluster(&v, &[0, 0, 1, 1]).unwrap();
        assert!(kld.iter().all(|k| k.abs() < 1e-15));
        // single-scaffold cluster, scaffold share q = 1/4 → -ln q
        let v = ["a", "b", "b", "b"];
        let kld = scaffold_kld(&v, &[0, 1, 1, 1], 0).unwrap();
        assert!((kld - 4.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn deciles_rank_values() {
        let vals: Vec<Option<f64>> = (0..20).map(|i| Some(i as f64)).chain([None]).collect();
        let bins = decile_bins(&vals);
        assert_eq!(bins[0], Some(0));
        assert_eq!(bins[1], Some(0));
        assert_eq!(bins[2], Some(1));
        assert_eq!(bins[19], Some(9));
        assert_eq!(bins[20], None);
        assert!(decile_bins(&[Some(3.0), Some(3.0)]).iter().all(|b| *b == Some(0)));
    }
}
