//! Multi-client protocols against pooled brute-force references.

mod common;

use common::oracles::*;
use common::*;
use fedmol::assignment::canonical_partition;
use fedmol::federation::ExecutionMode;
use fedmol::kmeans::{fed_kmeans, kmeanspp_init};
use fedmol::lsh::fed_lsh;
use fedmol::pca::{centralized_pca, fed_pca_kmeans};
use fedmol::seed::rng_from;
use fedmol::Points;
use rand::Rng;

fn split<T: Clone>(items: &[T], owner: &[usize], n: usize) -> Vec<Vec<T>> {
    (0..n)
        .map(|c| (0..items.len()).filter(|&i| owner[i] == c).map(|i| items[i].clone()).collect())
        .collect()
}

#[test]
fn fed_kmeans_is_pooled_lloyd_from_client_zero_init() {
    let mut rng = rng_from(11);
    for seed in 0..40 {
        let n_clients = rng.random_range(2..=6);
        let n = rng.random_range(3 * n_clients..80);
        let dim = rng.random_range(1..5);
        let k = rng.random_range(1..=3);
        let rounds = rng.random_range(1..8);
        let pooled = random_points(&mut rng, n, dim);
        let shards = split(&pooled, &random_labels(&mut rng, n, n_clients), n_clients);
        let clients: Vec<Points> = shards.iter().map(|s| Points::from_rows(s)).collect();

        let init = kmeanspp_init(&clients[0], k, seed).unwrap();
        let expected = oracle_kmeans(&pooled, &rows(&init.centroids), rounds);
        let fed = fed_kmeans(&clients, k, rounds, seed, ExecutionMode::Parallel).unwrap();
        for (got, want) in rows(&fed.model.centroids).iter().zip(&expected) {
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-9, "seed {seed}: {g} vs {w}");
            }
        }
        for (client, a) in shards.iter().zip(&fed.assignments) {
            let want: Vec<usize> = client.iter().map(|x| nearest(x, &expected)).collect();
            assert_eq!(canonical_partition(&a.labels), canonical_partition(&want), "seed {seed}");
        }
    }
}

#[test]
fn sequential_and_parallel_modes_agree() {
    let mut rng = rng_from(12);
    let pooled = random_points(&mut rng, 60, 3);
    let clients: Vec<Points> = split(&pooled, &random_labels(&mut rng, 60, 4), 4)
        .iter()
        .map(|s| Points::from_rows(s))
        .collect();
    let a = fed_kmeans(&clients, 4, 5, 3, ExecutionMode::Sequential).unwrap();
    let b = fed_kmeans(&clients, 4, 5, 3, ExecutionMode::Parallel).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.assignments, b.assignments);
}

#[test]
fn fed_lsh_matches_oracle_intersection_and_bins() {
    let mut rng = rng_from(13);
    let mut doubled = 0;
    for _ in 0..150 {
        let n_clients = rng.random_range(1..=5);
        let width = rng.random_range(8..40);
        let n = rng.random_range(n_clients..60);
        let density = rng.random_range(0.05..0.5);
        let pooled = random_fingerprints(&mut rng, n, width, density);
        let shards = split(&pooled, &random_labels(&mut rng, n, n_clients), n_clients);
        let n_he = rng.random_range(1..=4);
        let oracle_in: Vec<Vec<Vec<bool>>> = shards.iter().map(|s| s.iter().map(bools).collect()).collect();

        let fed = fed_lsh(&shards, n_he, 5, ExecutionMode::Parallel);
        match oracle_fed_bits(&oracle_in, n_he, 5) {
            None => assert!(fed.is_err()),
            Some((bits, used)) => {
                let fed = fed.unwrap();
                assert_eq!(fed.global_bits, bits);
                assert_eq!(fed.n_he_used, used);
                doubled += usize::from(used > n_he);
                for (client, a) in oracle_in.iter().zip(&fed.assignments) {
                    let mut got = canonical_partition(&a.labels);
                    got.sort();
                    assert_eq!(got, oracle_bins(client, &bits));
                }
            }
        }
    }
    assert!(doubled > 0, "no case exercised the doubling path");
}

#[test]
fn fed_pca_kmeans_projects_with_pooled_components() {
    let mut rng = rng_from(14);
    let pooled = random_points(&mut rng, 90, 6);
    let clients: Vec<Points> = split(&pooled, &random_labels(&mut rng, 90, 3), 3)
        .iter()
        .map(|s| Points::from_rows(s))
        .collect();
    let res = fed_pca_kmeans(&clients, 3, 4, 5, 0, ExecutionMode::Parallel).unwrap();
    let central = centralized_pca(&Points::from_rows(&pooled), 3).unwrap();
    for (a, b) in res.pca.projection.eigenvalues.iter().zip(&central.eigenvalues) {
        assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
    }
    assert_eq!(res.kmeans.model.dim(), 3);
    let sizes: usize = res.kmeans.assignments.iter().map(|a| a.labels.len()).sum();
    assert_eq!(sizes, 90);
}
