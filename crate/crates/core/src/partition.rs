//! Scaffold-based soft partitioning of a centralized dataset into client shards.
//!
//! Every scaffold gets a primary client (balanced by unique-scaffold count).
//! Its molecules are then spread with a split vector drawn from
//! `Dirichlet(alpha * w)`, where `w` puts `primary_fraction` on the primary
//! client and divides the rest evenly over the others. The primary share is
//! therefore `Beta(alpha * f, alpha * (1 - f))` with mean `f`.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::dataset::{ClientShard, MoleculeRecord};
use crate::seed::{derive_seed, derive_seed_str, rng_from};

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("need at least 2 clients, got {0}")]
    TooFewClients(usize),
    #[error("{clients} clients but only {scaffolds} unique scaffolds")]
    TooFewScaffolds { clients: usize, scaffolds: usize },
    #[error("{clients} clients but only {records} records")]
    TooFewRecords { clients: usize, records: usize },
    #[error("invalid partition config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionConfig {
    pub n_clients: usize,
    pub primary_fraction: f64,
    pub dirichlet_alpha: f64,
    pub seed: u64,
}

impl PartitionConfig {
    pub fn new(n_clients: usize, seed: u64) -> Self {
        Self {
            n_clients,
            primary_fraction: 0.9,
            dirichlet_alpha: 50.0,
            seed,
        }
    }

    fn validate(&self) -> Result<(), PartitionError> {
        if self.n_clients < 2 {
            return Err(PartitionError::TooFewClients(self.n_clients));
        }
        if !(self.primary_fraction > 0.0 && self.primary_fraction <= 1.0) {
            return Err(PartitionError::InvalidConfig(format!(
                "primary_fraction {} outside (0, 1]",
                self.primary_fraction
            )));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(PartitionError::InvalidConfig(format!(
                "dirichlet_alpha {} must be positive",
                self.dirichlet_alpha
            )));
        }
        Ok(())
    }
}

/// Maps each unique scaffold to its primary client, balancing unique-scaffold
/// counts to within one.
pub fn assign_scaffolds<S: AsRef<str>>(
    scaffold_keys: &[S],
    n_clients: usize,
    seed: u64,
) -> Result<BTreeMap<String, usize>, PartitionError> {
    if n_clients < 2 {
        return Err(PartitionError::TooFewClients(n_clients));
    }
    let unique: BTreeSet<&str> = scaffold_keys.iter().map(AsRef::as_ref).collect();
    if unique.len() < n_clients {
        return Err(PartitionError::TooFewScaffolds {
            clients: n_clients,
            scaffolds: unique.len(),
        });
    }
    let mut order: Vec<&str> = unique.into_iter().collect();
    order.shuffle(&mut rng_from(derive_seed(seed, &[0x5CAF])));
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s.to_owned(), i % n_clients))
        .collect())
}

/// Samples a Dirichlet split vector over the clients for one scaffold.
fn split_vector(cfg: &PartitionConfig, primary: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = cfg.n_clients;
    if cfg.primary_fraction >= 1.0 {
        let mut v = vec![0.0; n];
        v[primary] = 1.0;
        return v;
    }
    let other = (1.0 - cfg.primary_fraction) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n)
        .map(|c| {
            let weight = if c == primary {
                cfg.primary_fraction
            } else {
                other
            };
            Gamma::new(cfg.dirichlet_alpha * weight, 1.0)
                .expect("positive shape")
                .sample(rng)
        })
        .collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        // every gamma draw underflowed; fall back to the mean split
        v.iter_mut().enumerate().for_each(|(c, x)| {
            *x = if c == primary {
                cfg.primary_fraction
            } else {
                other
            }
        });
    }
    v
}

fn sample_categorical(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Result of [`soft_split`]: the shards plus each scaffold's primary client.
#[derive(Debug, Clone)]
pub struct Partition {
    pub shards: Vec<ClientShard>,
    pub primary: BTreeMap<String, usize>,
}

/// Splits records into `n_clients` non-empty shards, preserving input order
/// within each shard.
pub fn soft_split(
    records: &[MoleculeRecord],
    cfg: &PartitionConfig,
) -> Result<Partition, PartitionError> {
    cfg.validate()?;
    if records.len() < cfg.n_clients {
        return Err(PartitionError::TooFewRecords {
            clients: cfg.n_clients,
            records: records.len(),
        });
    }
    let keys: Vec<&str> = records.iter().map(|r| r.scaffold.as_str()).collect();
    let primary = assign_scaffolds(&keys, cfg.n_clients, cfg.seed)?;

    let mut by_scaffold: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        by_scaffold.entry(k).or_default().push(i);
    }

    let mut owner = vec![0usize; records.len()];
    for (scaffold, members) in &by_scaffold {
        let mut rng = rng_from(derive_seed_str(cfg.seed, scaffold));
        let split = split_vector(cfg, primary[*scaffold], &mut rng);
        for &i in members {
            owner[i] = sample_categorical(&split, &mut rng);
        }
    }

    repair_empty_shards(records, &mut owner, cfg.n_clients);

    let mut buckets: Vec<Vec<MoleculeRecord>> = vec![Vec::new(); cfg.n_clients];
    for (i, r) in records.iter().enumerate() {
        buckets[owner[i]].push(r.clone());
    }
    let shards = buckets
        .into_iter()
        .enumerate()
        .map(|(c, recs)| ClientShard {
            client_id: c,
            records: recs,
        })
        .collect();
    Ok(Partition { shards, primary })
}

/// Moves the lexicographically smallest mol_id of the largest shard into each
/// empty shard until none is empty.
fn repair_empty_shards(records: &[MoleculeRecord], owner: &mut [usize], n_clients: usize) {
    loop {
        let mut sizes = vec![0usize; n_clients];
        owner.iter().for_each(|&c| sizes[c] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..n_clients)
            .max_by_key(|&c| (sizes[c], std::cmp::Reverse(c)))
            .expect("n_clients >= 2");
        let donor = (0..records.len())
            .filter(|&i| owner[i] == largest)
            .min_by(|&a, &b| records[a].mol_id.cmp(&records[b].mol_id))
            .expect("largest shard is non-empty");
        owner[donor] = empty;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Fingerprint, MoleculeRecord};
    use std::collections::HashSet;

    fn records(scaffolds: usize, per: usize) -> Vec<MoleculeRecord> {
        (0..scaffolds * per)
            .map(|i| MoleculeRecord {
                mol_id: format!("m{i:05}"),
                fingerprint: Fingerprint::zeros(8),
                scaffold: format!("s{}", i / per),
                metadata: vec![],
            })
            .collect()
    }

    fn counts(map: &BTreeMap<String, usize>, n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        map.values().for_each(|&k| c[k] += 1);
        c
    }

    #[test]
    fn balanced_primary_assignment() {
        let keys: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        assert_eq!(counts(&assign_scaffolds(&keys, 5, 1).unwrap(), 5), vec![2; 5]);
        let keys: Vec<String> = (0..11).map(|i| format!("s{i}")).collect();
        let mut c = counts(&assign_scaffolds(&keys, 5, 1).unwrap(), 5);
        c.sort();
        assert_eq!(c, vec![2, 2, 2, 2, 3]);
        assert_eq!(
            assign_scaffolds(&keys, 5, 9).unwrap(),
            assign_scaffolds(&keys, 5, 9).unwrap()
        );
    }

    #[test]
    fn too_many_clients_is_an_error() {
        let keys = ["a", "b"];
        assert_eq!(
            assign_scaffolds(&keys, 3, 0),
            Err(PartitionError::TooFewScaffolds {
                clients: 3,
                scaffolds: 2
            })
        );
        assert_eq!(
            assign_scaffolds(&keys, 1, 0),
            Err(PartitionError::TooFewClients(1))
        );
    }

    #[test]
    fn full_primary_fraction_keeps_scaffolds_whole() {
        let recs = records(10, 7);
        let mut cfg = PartitionConfig::new(5, 3);
        cfg.primary_fraction = 1.0;
        let p = soft_split(&recs, &cfg).unwrap();
        for shard in &p.shards {
            for r in &shard.records {
                assert_eq!(p.primary[&r.scaffold], shard.client_id);
            }
        }
    }

    #[test]
    fn split_is_an_exact_partition() {
        let recs = records(12, 9);
        let p = soft_split(&recs, &PartitionConfig::new(4, 11)).unwrap();
        let mut seen = HashSet::new();
        for s in &p.shards {
            assert!(!s.records.is_empty());
            for r in &s.records {
                assert!(seen.insert(r.mol_id.clone()));
            }
        }
        assert_eq!(seen.len(), recs.len());
    }

    #[test]
    fn empty_shards_are_repaired() {
        let recs = records(1, 5);
        // client 1 and 2 empty; client 0 is largest and donates m00000, then m00001
        let mut owner = vec![0, 0, 0, 0, 0];
        repair_empty_shards(&recs, &mut owner, 3);
        assert_eq!(owner, vec![1, 2, 0, 0, 0]);

        // ties on size go to the lowest client id
        let mut owner = vec![1, 0, 1, 0];
        repair_empty_shards(&recs[..4], &mut owner, 3);
        assert_eq!(owner, vec![1, 2, 1, 0]);
    }

    #[test]
    fn rejects_bad_configs() {
        let recs = records(4, 2);
        let mut cfg = PartitionConfig::new(2, 0);
        cfg.primary_fraction = 0.0;
        assert!(soft_split(&recs, &cfg).is_err());
        cfg.primary_fraction = 0.9;
        cfg.dirichlet_alpha = -1.0;
        assert!(soft_split(&recs, &cfg).is_err());
        assert_eq!(
            soft_split(&recs[..1], &PartitionConfig::new(2, 0)).unwrap_err(),
            PartitionError::TooFewRecords {
                clients: 2,
                records: 1
            }
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let recs = records(6, 10);
        let a = soft_split(&recs, &PartitionConfig::new(3, 5)).unwrap();
        let b = soft_split(&recs, &PartitionConfig::new(3, 5)).unwrap();
        for (x, y) in a.shards.iter().zip(&b.shards) {
            assert_eq!(x.records, y.records);
        }
    }
}
