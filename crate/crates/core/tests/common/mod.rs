#![allow(dead_code)]

pub mod oracles;

use fedmol::dataset::{
    generate_synthetic, ClientShard, Fingerprint, MetaValue, MoleculeRecord, SyntheticSpec,
};
use fedmol::partition::{soft_split, PartitionConfig};
use fedmol::Points;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rows(p: &Points) -> Vec<Vec<f64>> {
    p.rows().map(<[f64]>::to_vec).collect()
}

pub fn bools(fp: &Fingerprint) -> Vec<bool> {
    (0..fp.len()).map(|i| fp.get(i)).collect()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect()
}

pub fn random_fingerprints(rng: &mut ChaCha8Rng, n: usize, width: usize, density: f64) -> Vec<Fingerprint> {
    (0..n)
        .map(|_| {
            let on: Vec<usize> = (0..width).filter(|_| rng.random_bool(density)).collect();
            Fingerprint::from_indices(width, &on)
        })
        .collect()
}

/// Labels over `k` clusters with every cluster used (needs `n >= k`).
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    labels
}

pub fn record(i: usize, fp: Fingerprint, scaffold: &str, metadata: Vec<(String, MetaValue)>) -> MoleculeRecord {
    MoleculeRecord {
        mol_id: format!("M{i:05}"),
        fingerprint: fp,
        scaffold: scaffold.to_owned(),
        metadata,
    }
}

pub fn synthetic_shards(spec: &SyntheticSpec, n_clients: usize, seed: u64) -> Vec<ClientShard> {
    let (_, records) = generate_synthetic(spec).unwrap();
    soft_split(&records, &PartitionConfig::new(n_clients, seed)).unwrap().shards
}
