//! Experiment orchestration: run a method with its centralized counterpart and
//! the random baseline, evaluate per client, rank grid configurations, and
//! persist long-format reports.

mod config;
mod output;
mod rank;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use config::{ExperimentConfig, GRID_CLIENTS, GRID_K, GRID_N_HE, GRID_P, GRID_ROUNDS};
pub use output::{
    cluster_rows, long_rows, persist_outcome, read_long_csv, write_long_csv, LongRow, CLUSTER_HEADER,
    LONG_HEADER,
};
pub use rank::{rank_scores, rank_slice, ConfigSummary, RankTable, RankedScore, Score};

use crate::assignment::{ClusterAssignment, Method};
use crate::dataset::{read_dataset, shard_file_name, ClientShard, DatasetError};
use crate::federation::ExecutionMode;
use crate::kmeans::{centralized_kmeans, fed_kmeans, KMeansError};
use crate::lsh::{centralized_lsh, fed_lsh, LshError};
use crate::metrics::{
    aggregate_reports, evaluate, random_assignment, FeatureSpace, MetricError, MetricsReport,
};
use crate::partition::{soft_split, PartitionConfig, PartitionError};
use crate::pca::{centralized_pca, fed_pca_kmeans, project, PcaError};
use crate::points::Points;
use crate::seed::derive_seed;

/// Seed stream for the random baseline.
const RANDOM_STREAM: u64 = 0x52414e44;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Lsh(#[from] LshError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One method's per-client assignments and reports.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    pub setting: String,
    pub assignments: Vec<ClusterAssignment>,
    pub reports: Vec<MetricsReport>,
    pub aggregate: MetricsReport,
}

impl MethodRun {
    fn new(
        method: Method,
        setting: String,
        shards: &[ClientShard],
        assignments: Vec<ClusterAssignment>,
        spaces: &[Option<Points>],
    ) -> Result<Self, ExperimentError> {
        let reports = shards
            .par_iter()
            .zip(&assignments)
            .zip(spaces)
            .map(|((s, a), space)| {
                let fs = space.as_ref().map_or(FeatureSpace::Raw, FeatureSpace::Projected);
                evaluate(s, a, fs)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let aggregate = aggregate_reports(&reports)?;
        Ok(Self {
            method,
            setting,
            assignments,
            reports,
            aggregate,
        })
    }
}

/// Federated, centralized and random rows for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub dataset: String,
    pub federated: MethodRun,
    pub centralized: MethodRun,
    pub random: MethodRun,
}

impl Comparison {
    /// Distinct runs; a random-method experiment has only one.
    pub fn runs(&self) -> Vec<&MethodRun> {
        if self.federated.method == Method::Random {
            vec![&self.federated]
        } else {
            vec![&self.federated, &self.centralized, &self.random]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub comparisons: Vec<Comparison>,
}

/// Loads `<name>.client<k>.tsv` shards next to `path` when all `n_clients` of
/// them exist; otherwise reads `path` and partitions it with `seed`.
pub fn load_shards(
    path: &Path,
    n_clients: usize,
    seed: u64,
) -> Result<(String, Vec<ClientShard>), ExperimentError> {
    let name = crate::dataset::dataset_name_from_path(path);
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let shard_paths: Vec<PathBuf> = (0..n_clients)
        .map(|k| dir.join(shard_file_name(&name, k)))
        .collect();
    if shard_paths.iter().all(|p| p.is_file()) {
        let shards = shard_paths
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let (_, records) = read_dataset(p)?;
                Ok(ClientShard::new(k, records)?)
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        return Ok((name, shards));
    }
    let (_, records) = read_dataset(path)?;
    let part = soft_split(&records, &PartitionConfig::new(n_clients, seed))?;
    Ok((name, part.shards))
}

fn offsets(shards: &[ClientShard]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    shards
        .iter()
        .map(|s| {
            let r = start..start + s.len();
            start = r.end;
            r
        })
        .collect()
}

fn random_run(
    shards: &[ClientShard],
    n_clusters: &[usize],
    cfg: &ExperimentConfig,
) -> Result<MethodRun, ExperimentError> {
    let assignments = shards
        .iter()
        .zip(n_clusters)
        .map(|(s, &k)| {
            random_assignment(s.len(), k.max(1), derive_seed(cfg.seed, &[RANDOM_STREAM, s.client_id as u64]))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let setting = if cfg.method == Method::Random {
        cfg.setting()
    } else {
        format!("matched={}", cfg.method)
    };
    MethodRun::new(Method::Random, setting, shards, assignments, &vec![None; shards.len()])
}

/// Runs `cfg.method` federated over `shards`, its centralized counterpart on
/// the pooled data (scored on each client's records), and a random baseline
/// matching the federated cluster count per client.
pub fn compare_federated_centralized(
    dataset: &str,
    shards: &[ClientShard],
    cfg: &ExperimentConfig,
) -> Result<Comparison, ExperimentError> {
    if shards.is_empty() {
        return Err(ExperimentError::Config("no client shards".into()));
    }
    let mode = ExecutionMode::Parallel;
    let setting = cfg.setting();
    let n = shards.len();
    let ranges = offsets(shards);
    let client_points: Vec<Points> = shards.iter().map(Points::from_shard).collect();
    let raw_spaces = vec![None; n];

    if cfg.method == Method::Random {
        let run = random_run(shards, &vec![cfg.k; n], cfg)?;
        return Ok(Comparison {
            dataset: dataset.to_owned(),
            federated: run.clone(),
            centralized: run.clone(),
            random: run,
        });
    }

    let (federated, centralized) = match cfg.method {
        Method::FedKMeans | Method::CentralizedKMeans => {
            let fed = fed_kmeans(&client_points, cfg.k, cfg.rounds, cfg.seed, mode)?;
            let pooled = Points::concat(&client_points);
            let (_, all) = centralized_kmeans(&pooled, cfg.k, cfg.rounds, cfg.seed)?;
            let cen: Vec<ClusterAssignment> =
                ranges.iter().map(|r| all.subset(&r.clone().collect::<Vec<_>>())).collect();
            (
                MethodRun::new(Method::FedKMeans, setting.clone(), shards, fed.assignments, &raw_spaces)?,
                MethodRun::new(Method::CentralizedKMeans, setting, shards, cen, &raw_spaces)?,
            )
        }
        Method::FedPcaKMeans | Method::CentralizedPcaKMeans => {
            let fed = fed_pca_kmeans(&client_points, cfg.p, cfg.k, cfg.rounds, cfg.seed, mode)?;
            let fed_spaces: Vec<Option<Points>> =
                fed.pca.projected.iter().cloned().map(Some).collect();
            let pooled = Points::concat(&client_points);
            let proj = centralized_pca(&pooled, cfg.p)?;
            let projected = project(&pooled, &proj)?;
            let (_, mut all) = centralized_kmeans(&projected, cfg.k, cfg.rounds, cfg.seed)?;
            all.method = Method::CentralizedPcaKMeans;
            all.provenance.insert("p".into(), cfg.p.to_string());
            let cen_spaces: Vec<Option<Points>> = ranges
                .iter()
                .map(|r| Some(projected.select(&r.clone().collect::<Vec<_>>())))
                .collect();
            let cen: Vec<ClusterAssignment> =
                ranges.iter().map(|r| all.subset(&r.clone().collect::<Vec<_>>())).collect();
            (
                MethodRun::new(Method::FedPcaKMeans, setting.clone(), shards, fed.kmeans.assignments, &fed_spaces)?,
                MethodRun::new(Method::CentralizedPcaKMeans, setting, shards, cen, &cen_spaces)?,
            )
        }
        Method::FedLsh | Method::CentralizedLsh => {
            let fps: Vec<_> = shards.iter().map(ClientShard::fingerprints).collect();
            let fed = fed_lsh(&fps, cfg.n_he, cfg.max_doublings, mode)?;
            let pooled: Vec<_> = fps.concat();
            let (_, all) = centralized_lsh(&pooled, cfg.n_he)?;
            let cen: Vec<ClusterAssignment> =
                ranges.iter().map(|r| all.subset(&r.clone().collect::<Vec<_>>())).collect();
            let fed_assignments = fed
                .assignments
                .into_iter()
                .map(|a| a.with_provenance("n_he_used", fed.n_he_used))
                .collect();
            (
                MethodRun::new(Method::FedLsh, setting.clone(), shards, fed_assignments, &raw_spaces)?,
                MethodRun::new(Method::CentralizedLsh, setting, shards, cen, &raw_spaces)?,
            )
        }
        Method::Random => unreachable!("handled above"),
    };
    let counts: Vec<usize> = federated.assignments.iter().map(ClusterAssignment::n_clusters).collect();
    let random = random_run(shards, &counts, cfg)?;
    Ok(Comparison {
        dataset: dataset.to_owned(),
        federated,
        centralized,
        random,
    })
}

/// Validates `cfg`, then loads and runs every dataset. Nothing is written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    if cfg.datasets.is_empty() {
        return Err(ExperimentError::Config("no dataset given".into()));
    }
    let comparisons = cfg
        .datasets
        .iter()
        .map(|path| {
            let (name, shards) = load_shards(path, cfg.n_clients, cfg.seed)?;
            compare_federated_centralized(&name, &shards, cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        comparisons,
    })
}

/// Outcome of a grid: finished cells, failed cells with their error, and the
/// rank table over the finished ones.
#[derive(Debug)]
pub struct GridResult {
    pub outcomes: Vec<ExperimentOutcome>,
    pub failures: Vec<(ExperimentConfig, String)>,
    pub ranks: RankTable,
}

/// Runs every cell (in parallel) and ranks the federated runs per method.
/// Cells that fail, e.g. `k` larger than the data, are reported and left out
/// of the ranking.
pub fn grid_search(grid: &[ExperimentConfig]) -> Result<GridResult, ExperimentError> {
    for cfg in grid {
        cfg.validate()?;
    }
    let results: Vec<Result<ExperimentOutcome, ExperimentError>> =
        grid.par_iter().map(run_experiment).collect();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (cfg, r) in grid.iter().zip(results) {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push((cfg.clone(), e.to_string())),
        }
    }
    let metrics = grid
        .first()
        .map(|c| c.metrics.clone())
        .unwrap_or_default();
    let (scores, summaries) = scores_from_outcomes(&outcomes);
    let ranks = rank_scores(&scores, &summaries, &metrics);
    Ok(GridResult {
        outcomes,
        failures,
        ranks,
    })
}

/// Per-client federated scores of each outcome plus tie-break summaries.
pub fn scores_from_outcomes(outcomes: &[ExperimentOutcome]) -> (Vec<Score>, Vec<ConfigSummary>) {
    let mut scores = Vec::new();
    let mut summaries = Vec::new();
    for o in outcomes {
        let id = o.config.config_id();
        let mut clusters = Vec::new();
        for c in &o.comparisons {
            for r in &c.federated.reports {
                clusters.push(r.cluster_stats.n_clusters as f64);
                for m in crate::metrics::Metric::ALL {
                    scores.push(Score {
                        config_id: id.clone(),
                        method: c.federated.method,
                        dataset: c.dataset.clone(),
                        client: r.client_id.unwrap_or(0),
                        metric: m,
                        value: r.value(m),
                    });
                }
            }
        }
        let mean_clusters = if clusters.is_empty() {
            f64::INFINITY
        } else {
            clusters.iter().sum::<f64>() / clusters.len() as f64
        };
        let hyper = |name: &str| {
            o.config
                .hyperparameters()
                .iter()
                .find(|(n, _)| *n == name)
                .map_or(0, |(_, v)| *v)
        };
        summaries.push(ConfigSummary {
            config_id: id,
            method: o.config.method,
            mean_clusters,
            size_key: vec![hyper("k"), hyper("p"), hyper("n_he")],
        });
    }
    (scores, summaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};

    fn shards(n_clients: usize) -> Vec<ClientShard> {
        let spec = SyntheticSpec {
            n_scaffolds: 8,
            molecules_per_scaffold: 10,
            fingerprint_bits: 128,
            ..SyntheticSpec::default()
        };
        let (_, records) = generate_synthetic(&spec).unwrap();
        soft_split(&records, &PartitionConfig::new(n_clients, 1)).unwrap().shards
    }

    #[test]
    fn comparison_has_three_rows_per_method() {
        let s = shards(3);
        for method in Method::FEDERATED {
            let cfg = ExperimentConfig { method, k: 5, rounds: 3, p: 5, n_he: 8, ..Default::default() };
            let c = compare_federated_centralized("t", &s, &cfg).unwrap();
            assert_eq!(c.federated.method, method);
            assert_eq!(c.centralized.method, method.centralized());
            assert_eq!(c.random.method, Method::Random);
            assert_eq!(c.runs().len(), 3);
            for (f, r) in c.federated.assignments.iter().zip(&c.random.assignments) {
                assert!(r.n_clusters() <= f.n_clusters());
            }
            assert_eq!(c, compare_federated_centralized("t", &s, &cfg).unwrap());
        }
    }

    #[test]
    fn random_method_rows_coincide() {
        let s = shards(2);
        let cfg = ExperimentConfig { method: Method::Random, ..Default::default() };
        let c = compare_federated_centralized("t", &s, &cfg).unwrap();
        assert_eq!(c.federated, c.centralized);
        assert_eq!(c.federated, c.random);
        assert_eq!(c.runs().len(), 1);
    }

    #[test]
    fn grid_failures_are_collected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec { n_scaffolds: 6, molecules_per_scaffold: 5, fingerprint_bits: 64, ..Default::default() };
        let (m, r) = generate_synthetic(&spec).unwrap();
        let path = dir.path().join("tiny.tsv");
        crate::dataset::write_dataset(&m, &r, &path).unwrap();
        let base = ExperimentConfig { datasets: vec![path], rounds: 3, ..Default::default() };
        let grid = vec![base.clone(), ExperimentConfig { k: 50, ..base }];
        let g = grid_search(&grid).unwrap();
        assert_eq!(g.outcomes.len(), 1, "{:?}", g.failures);
        assert_eq!(g.failures.len(), 1);
        assert_eq!(g.ranks.best[&Method::FedKMeans], grid[0].config_id());
    }
}
