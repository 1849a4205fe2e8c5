use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    FedKMeans,
    FedPcaKMeans,
    FedLsh,
    CentralizedKMeans,
    CentralizedPcaKMeans,
    CentralizedLsh,
    Random,
}

impl Method {
    pub const FEDERATED: [Method; 3] = [Method::FedKMeans, Method::FedPcaKMeans, Method::FedLsh];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FedKMeans => "fed-kmeans",
            Method::FedPcaKMeans => "fed-pca-kmeans",
            Method::FedLsh => "fed-lsh",
            Method::CentralizedKMeans => "centralized-kmeans",
            Method::CentralizedPcaKMeans => "centralized-pca-kmeans",
            Method::CentralizedLsh => "centralized-lsh",
            Method::Random => "random",
        }
    }

    /// Centralized counterpart of a federated method.
    pub fn centralized(self) -> Method {
        match self {
            Method::FedKMeans => Method::CentralizedKMeans,
            Method::FedPcaKMeans => Method::CentralizedPcaKMeans,
            Method::FedLsh => Method::CentralizedLsh,
            other => other,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Method::FedKMeans,
            Method::FedPcaKMeans,
            Method::FedLsh,
            Method::CentralizedKMeans,
            Method::CentralizedPcaKMeans,
            Method::CentralizedLsh,
            Method::Random,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Cluster labels for the records of one shard.
///
/// `labels` are dense from 0 in order of first occurrence; `cluster_keys[j]`
/// is the method's own identifier for dense cluster `j` (centroid index, LSH
/// bin pattern, ...), which is stable across clients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub method: Method,
    pub labels: Vec<usize>,
    pub cluster_keys: Vec<String>,
    pub provenance: BTreeMap<String, String>,
}

impl ClusterAssignment {
    pub fn from_keys<K: AsRef<str>>(method: Method, keys: &[K]) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut cluster_keys = Vec::new();
        let labels = keys
            .iter()
            .map(|k| {
                let k = k.as_ref();
                *index.entry(k).or_insert_with(|| {
                    cluster_keys.push(k.to_owned());
                    cluster_keys.len() - 1
                })
            })
            .collect();
        Self {
            method,
            labels,
            cluster_keys,
            provenance: BTreeMap::new(),
        }
    }

    pub fn from_labels(method: Method, raw: &[usize]) -> Self {
        let keys: Vec<String> = raw.iter().map(usize::to_string).collect();
        Self::from_keys(method, &keys)
    }

    pub fn with_provenance(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.insert(key.to_owned(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_keys.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        self.labels.iter().for_each(|&l| sizes[l] += 1);
        sizes
    }

    /// Restriction to a subset of records, re-densified.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let keys: Vec<&str> = indices
            .iter()
            .map(|&i| self.cluster_keys[self.labels[i]].as_str())
            .collect();
        let mut out = Self::from_keys(self.method, &keys);
        out.provenance = self.provenance.clone();
        out
    }
}

/// Canonical partition of `0..n` induced by labels: groups of record indices,
/// each sorted, ordered by smallest member. Label names do not matter.
pub fn canonical_partition(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut parts: Vec<Vec<usize>> = groups.into_values().collect();
    parts.sort_by_key(|g| g[0]);
    parts
}
