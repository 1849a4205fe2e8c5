use std::path::PathBuf;

use fedmol::assignment::Method;
use fedmol::dataset::{generate_synthetic, write_dataset, SyntheticSpec};
use fedmol::experiments::{
    grid_search, persist_outcome, rank_scores, read_long_csv, run_experiment, ConfigSummary,
    ExperimentConfig, Score,
};
use fedmol::metrics::Metric;

fn dataset(dir: &std::path::Path, name: &str, seed: u64) -> PathBuf {
    let spec = SyntheticSpec {
        n_scaffolds: 10,
        molecules_per_scaffold: 10,
        fingerprint_bits: 256,
        seed,
        ..SyntheticSpec::default()
    };
    let (mut manifest, records) = generate_synthetic(&spec).unwrap();
    manifest.name = name.into();
    let path = dir.join(format!("{name}.tsv"));
    write_dataset(&manifest, &records, &path).unwrap();
    path
}

#[test]
fn grid_ranks_finished_cells_and_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let base = ExperimentConfig {
        datasets: vec![dataset(dir.path(), "a", 1), dataset(dir.path(), "b", 2)],
        ..ExperimentConfig::default()
    };
    let grid: Vec<ExperimentConfig> = base
        .grid()
        .into_iter()
        .filter(|c| c.rounds == 3 && [5, 10, 500].contains(&c.k))
        .collect();
    assert_eq!(grid.len(), 3);
    let res = grid_search(&grid).unwrap();
    assert_eq!(res.outcomes.len(), 2);
    assert_eq!(res.failures.len(), 1);
    assert_eq!(res.failures[0].0.k, 500);

    let order = &res.ranks.order[&Method::FedKMeans];
    assert_eq!(order.len(), 2);
    assert_eq!(&res.ranks.best[&Method::FedKMeans], &order[0]);
    let sum: f64 = res.ranks.mean_ranks.values().sum();
    assert!((sum - 3.0).abs() < 1e-12, "two configs share ranks 1 and 2 in every slice");
}

#[test]
fn persisted_csv_matches_in_memory_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        datasets: vec![dataset(dir.path(), "d", 3)],
        method: Method::FedPcaKMeans,
        ..ExperimentConfig::default()
    };
    let outcome = run_experiment(&cfg).unwrap();
    let dirs = persist_outcome(&dir.path().join("out"), &outcome).unwrap();
    assert_eq!(dirs.len(), 3);
    let fed = &outcome.comparisons[0].federated;
    let rows = read_long_csv(&dirs[0].join("client2.csv")).unwrap();
    for m in Metric::ALL {
        let row = rows.iter().find(|r| r.metric == m.as_str()).unwrap();
        assert_eq!(row.value, fed.reports[2].value(m), "{m}");
        assert_eq!(row.method, "fed-pca-kmeans");
    }
}

fn score(id: &str, dataset: &str, client: usize, metric: Metric, value: Option<f64>) -> Score {
    Score {
        config_id: id.into(),
        method: Method::FedLsh,
        dataset: dataset.into(),
        client,
        metric,
        value,
    }
}

#[test]
fn ranks_average_metrics_then_clients_then_datasets() {
    use Metric::{DaviesBouldin as Db, SfIcf};
    let scores = vec![
        // dataset x, client 0: a wins both
        score("a", "x", 0, SfIcf, Some(0.9)),
        score("b", "x", 0, SfIcf, Some(0.1)),
        score("a", "x", 0, Db, Some(0.2)),
        score("b", "x", 0, Db, Some(0.8)),
        // dataset x, client 1: tie on SF-ICF, b undefined on DB
        score("a", "x", 1, SfIcf, Some(0.5)),
        score("b", "x", 1, SfIcf, Some(0.5)),
        score("a", "x", 1, Db, Some(3.0)),
        score("b", "x", 1, Db, None),
        // dataset y, one client: b wins both
        score("a", "y", 0, SfIcf, Some(0.2)),
        score("b", "y", 0, SfIcf, Some(0.7)),
        score("a", "y", 0, Db, Some(1.0)),
        score("b", "y", 0, Db, Some(0.4)),
    ];
    let summaries = vec![
        ConfigSummary { config_id: "a".into(), method: Method::FedLsh, mean_clusters: 9.0, size_key: vec![32] },
        ConfigSummary { config_id: "b".into(), method: Method::FedLsh, mean_clusters: 4.0, size_key: vec![16] },
    ];
    let t = rank_scores(&scores, &summaries, &[SfIcf, Db]);
    // a: x = mean(1, 1.25) = 1.125, y = 2 -> 1.5625
    // b: x = mean(2, 1.75) = 1.875, y = 1 -> 1.4375
    assert!((t.mean_ranks["a"] - 1.5625).abs() < 1e-12);
    assert!((t.mean_ranks["b"] - 1.4375).abs() < 1e-12);
    assert_eq!(t.best[&Method::FedLsh], "b");
    assert_eq!(t.ranked.len(), 12);
}
