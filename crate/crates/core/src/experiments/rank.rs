//! Rank aggregation over grid configurations.
//!
//! Configurations of the same method are ranked within each
//! `(dataset, client, metric)` slice, then ranks are averaged over metrics,
//! then clients, then datasets.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::assignment::Method;
use crate::metrics::Metric;

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub config_id: String,
    pub method: Method,
    pub dataset: String,
    pub client: usize,
    pub metric: Metric,
    /// `None` for undefined (flagged) values.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSummary {
    pub config_id: String,
    pub method: Method,
    pub mean_clusters: f64,
    /// Hyperparameters compared in order when breaking ties, smaller first.
    pub size_key: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedScore {
    pub score: Score,
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankTable {
    pub ranked: Vec<RankedScore>,
    pub mean_ranks: BTreeMap<String, f64>,
    /// Config ids per method, best first.
    pub order: BTreeMap<Method, Vec<String>>,
    pub best: BTreeMap<Method, String>,
}

/// Ranks `1..=n` with 1 the best. Tied values share the mean of their
/// positions; missing values take the bottom positions, tied among
/// themselves.
pub fn rank_slice(values: &[Option<f64>], higher_is_better: bool) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let key = |i: usize| values[i].filter(|v| !v.is_nan());
    idx.sort_by(|&a, &b| match (key(a), key(b)) {
        (Some(x), Some(y)) if higher_is_better => y.total_cmp(&x),
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    });
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && key(idx[end]) == key(idx[start]) {
            end += 1;
        }
        // positions start+1 ..= end
        let r = (start + 1 + end) as f64 / 2.0;
        idx[start..end].iter().for_each(|&i| ranks[i] = r);
        start = end;
    }
    ranks
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn rank_scores(scores: &[Score], summaries: &[ConfigSummary], metrics: &[Metric]) -> RankTable {
    type Slice<'a> = (Method, &'a str, usize, Metric);
    let mut slices: BTreeMap<Slice<'_>, Vec<&Score>> = BTreeMap::new();
    for s in scores.iter().filter(|s| metrics.contains(&s.metric)) {
        slices
            .entry((s.method, s.dataset.as_str(), s.client, s.metric))
            .or_default()
            .push(s);
    }

    let mut ranked = Vec::new();
    // config -> dataset -> client -> ranks over metrics
    let mut nested: BTreeMap<&str, BTreeMap<&str, BTreeMap<usize, Vec<f64>>>> = BTreeMap::new();
    for ((_, dataset, client, metric), members) in &slices {
        let values: Vec<Option<f64>> = members.iter().map(|s| s.value).collect();
        for (s, r) in members.iter().zip(rank_slice(&values, metric.higher_is_better())) {
            nested
                .entry(s.config_id.as_str())
                .or_default()
                .entry(dataset)
                .or_default()
                .entry(*client)
                .or_default()
                .push(r);
            ranked.push(RankedScore {
                score: (*s).clone(),
                rank: r,
            });
        }
    }
    let mean_ranks: BTreeMap<String, f64> = nested
        .into_iter()
        .map(|(id, datasets)| {
            let per_dataset = datasets
                .values()
                .map(|clients| mean(clients.values().map(|m| mean(m.iter().copied()))));
            (id.to_owned(), mean(per_dataset))
        })
        .collect();

    let mut by_method: BTreeMap<Method, Vec<&ConfigSummary>> = BTreeMap::new();
    for s in summaries.iter().filter(|s| mean_ranks.contains_key(&s.config_id)) {
        by_method.entry(s.method).or_default().push(s);
    }
    let mut order = BTreeMap::new();
    let mut best = BTreeMap::new();
    for (method, mut configs) in by_method {
        configs.sort_by(|a, b| {
            mean_ranks[&a.config_id]
                .total_cmp(&mean_ranks[&b.config_id])
                .then(a.mean_clusters.total_cmp(&b.mean_clusters))
                .then_with(|| a.size_key.cmp(&b.size_key))
                .then_with(|| a.config_id.cmp(&b.config_id))
        });
        configs.dedup_by(|a, b| a.config_id == b.config_id);
        best.insert(method, configs[0].config_id.clone());
        order.insert(method, configs.into_iter().map(|c| c.config_id.clone()).collect());
    }
    RankTable {
        ranked,
        mean_ranks,
        order,
        best,
    }
}
