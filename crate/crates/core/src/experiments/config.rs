use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::assignment::Method;
use crate::lsh::{DEFAULT_MAX_DOUBLINGS, DEFAULT_N_HE};
use crate::metrics::Metric;

pub const GRID_K: [usize; 7] = [5, 10, 20, 50, 100, 200, 500];
pub const GRID_ROUNDS: [usize; 3] = [3, 5, 10];
pub const GRID_P: [usize; 4] = [5, 10, 20, 50];
pub const GRID_N_HE: [usize; 4] = [4, 8, 16, 32];
pub const GRID_CLIENTS: [usize; 2] = [5, 10];

/// One experiment. Stored as flat `key = value` text:
///
/// ```text
/// dataset = data/a.tsv, data/b.tsv
/// n_clients = 5
/// method = fed-kmeans
/// k = 5
/// rounds = 3
/// seed = 7
/// ```
///
/// Keys: `dataset`, `n_clients`, `method`, `k`, `rounds`, `p`, `n_he`,
/// `max_doublings`, `metrics`, `seed`, `unsafe_grid`. Blank lines and lines
/// starting with `#` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub datasets: Vec<PathBuf>,
    pub n_clients: usize,
    pub method: Method,
    pub k: usize,
    pub rounds: usize,
    pub p: usize,
    pub n_he: usize,
    pub max_doublings: usize,
    /// Metrics used for ranking. Every metric is always reported.
    pub metrics: Vec<Metric>,
    pub seed: u64,
    /// Allows hyperparameters outside the standard grids.
    pub unsafe_grid: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            n_clients: 5,
            method: Method::FedKMeans,
            k: 5,
            rounds: 5,
            p: 10,
            n_he: DEFAULT_N_HE,
            max_doublings: DEFAULT_MAX_DOUBLINGS,
            metrics: Metric::RANKED.to_vec(),
            seed: 0,
            unsafe_grid: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ExperimentError> {
    value
        .parse()
        .map_err(|_| ExperimentError::Config(format!("{key}: cannot parse {value:?}")))
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!("line {}: expected key = value", i + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        match key {
            "dataset" => self.datasets = list(value).map(PathBuf::from).collect(),
            "n_clients" => self.n_clients = parse_num(key, value)?,
            "method" => self.method = value.parse().map_err(ExperimentError::Config)?,
            "k" => self.k = parse_num(key, value)?,
            "rounds" => self.rounds = parse_num(key, value)?,
            "p" => self.p = parse_num(key, value)?,
            "n_he" => self.n_he = parse_num(key, value)?,
            "max_doublings" => self.max_doublings = parse_num(key, value)?,
            "metrics" => {
                self.metrics = list(value)
                    .map(|m| m.parse().map_err(ExperimentError::Config))
                    .collect::<Result<_, _>>()?
            }
            "seed" => self.seed = parse_num(key, value)?,
            "unsafe_grid" => self.unsafe_grid = parse_num(key, value)?,
            other => return Err(ExperimentError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Hyperparameters that affect `method`, as `(name, value)` pairs.
    pub fn hyperparameters(&self) -> Vec<(&'static str, usize)> {
        match self.method {
            Method::FedKMeans | Method::CentralizedKMeans => {
                vec![("k", self.k), ("rounds", self.rounds)]
            }
            Method::FedPcaKMeans | Method::CentralizedPcaKMeans => {
                vec![("p", self.p), ("k", self.k), ("rounds", self.rounds)]
            }
            Method::FedLsh | Method::CentralizedLsh => vec![("n_he", self.n_he)],
            Method::Random => vec![("k", self.k)],
        }
    }

    /// Hyperparameter string such as `k=5;rounds=3`.
    pub fn setting(&self) -> String {
        self.hyperparameters()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Canonical identifier of everything that determines the results for
    /// one dataset.
    pub fn config_id(&self) -> String {
        let metrics: Vec<&str> = self.metrics.iter().map(|m| m.as_str()).collect();
        format!(
            "{};{};n_clients={};max_doublings={};seed={};metrics={}",
            self.method,
            self.setting(),
            self.n_clients,
            self.max_doublings,
            self.seed,
            metrics.join(",")
        )
    }

    /// First 16 hex digits of the SHA-256 of [`config_id`](Self::config_id).
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.config_id().as_bytes());
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.n_clients < 2 {
            return bad(format!("n_clients = {} (need >= 2)", self.n_clients));
        }
        if self.metrics.is_empty() {
            return bad("metrics list is empty".into());
        }
        for (name, value) in self.hyperparameters() {
            if value == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.unsafe_grid {
            return Ok(());
        }
        let check = |name: &str, value: usize, grid: &[usize]| {
            if grid.contains(&value) {
                Ok(())
            } else {
                Err(ExperimentError::Config(format!(
                    "{name} = {value} outside grid {grid:?} (use unsafe_grid to override)"
                )))
            }
        };
        check("n_clients", self.n_clients, &GRID_CLIENTS)?;
        for (name, value) in self.hyperparameters() {
            match name {
                "k" => check(name, value, &GRID_K)?,
                "rounds" => check(name, value, &GRID_ROUNDS)?,
                "p" => check(name, value, &GRID_P)?,
                "n_he" => check(name, value, &GRID_N_HE)?,
                _ => {}
            }
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let datasets: Vec<String> = self.datasets.iter().map(|d| d.display().to_string()).collect();
        let metrics: Vec<&str> = self.metrics.iter().map(|m| m.as_str()).collect();
        format!(
            "dataset = {}\nn_clients = {}\nmethod = {}\nk = {}\nrounds = {}\np = {}\nn_he = {}\n\
             max_doublings = {}\nmetrics = {}\nseed = {}\nunsafe_grid = {}\n",
            datasets.join(", "),
            self.n_clients,
            self.method,
            self.k,
            self.rounds,
            self.p,
            self.n_he,
            self.max_doublings,
            metrics.join(", "),
            self.seed,
            self.unsafe_grid
        )
    }

    /// Every grid point for this config's method, other fields copied.
    pub fn grid(&self) -> Vec<ExperimentConfig> {
        let with = |f: &dyn Fn(&mut ExperimentConfig)| {
            let mut c = self.clone();
            f(&mut c);
            c
        };
        let mut out = Vec::new();
        match self.method {
            Method::FedKMeans | Method::CentralizedKMeans | Method::Random => {
                for k in GRID_K {
                    for r in GRID_ROUNDS {
                        out.push(with(&|c| {
                            c.k = k;
                            c.rounds = r;
                        }));
                    }
                }
            }
            Method::FedPcaKMeans | Method::CentralizedPcaKMeans => {
                for p in GRID_P {
                    for k in GRID_K {
                        for r in GRID_ROUNDS {
                            out.push(with(&|c| {
                                c.p = p;
                                c.k = k;
                                c.rounds = r;
                            }));
                        }
                    }
                }
            }
            Method::FedLsh | Method::CentralizedLsh => {
                for n in GRID_N_HE {
                    out.push(with(&|c| c.n_he = n));
                }
            }
        }
        if self.method == Method::Random {
            out.dedup_by_key(|c| c.k);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let cfg = ExperimentConfig::parse(
            "# demo\ndataset = a.tsv, b.tsv\nmethod = fed-lsh\nn_he = 16\nseed = 3\n\n",
        )
        .unwrap();
        assert_eq!(cfg.datasets, [PathBuf::from("a.tsv"), PathBuf::from("b.tsv")]);
        assert_eq!(cfg.method, Method::FedLsh);
        assert_eq!(cfg.setting(), "n_he=16");
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn grid_bounds_enforced() {
        let err = ExperimentConfig::parse("k = 7").unwrap_err();
        assert!(err.to_string().contains("k = 7 outside grid"));
        assert!(ExperimentConfig::parse("k = 7\nunsafe_grid = true").is_ok());
        assert!(ExperimentConfig::parse("n_clients = 3").is_err());
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("k").is_err());
        // irrelevant keys are not checked
        assert!(ExperimentConfig::parse("method = fed-lsh\nk = 7").is_ok());
    }

    #[test]
    fn hash_tracks_relevant_fields() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.n_he = 8;
        assert_eq!(a.config_hash(), b.config_hash());
        b.k = 10;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }

    #[test]
    fn grids_have_expected_sizes() {
        let base = ExperimentConfig::default();
        assert_eq!(base.grid().len(), 21);
        let pca = ExperimentConfig { method: Method::FedPcaKMeans, ..base.clone() };
        assert_eq!(pca.grid().len(), 84);
        let lsh = ExperimentConfig { method: Method::FedLsh, ..base.clone() };
        assert_eq!(lsh.grid().len(), 4);
        let rnd = ExperimentConfig { method: Method::Random, ..base };
        assert_eq!(rnd.grid().len(), 7);
        assert!(rnd.grid().iter().all(|c| c.validate().is_ok()));
    }
}
