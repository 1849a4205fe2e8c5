//! Command-line front end.
//!
//! Failures print one line to stderr, `fedmol: error[<kind>]: <message>`,
//! and exit nonzero. Usage errors exit with 2 and also print the usage text.
//! Result files go under `--results-dir`, else `$FEDMOL_RESULTS_DIR`, else
//! `results`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::assignment::Method;
use crate::dataset::{
    generate_synthetic, read_dataset, render_dataset, shard_file_name, DatasetError,
    DatasetManifest, SyntheticSpec,
};
use crate::experiments::{
    compare_federated_centralized, grid_search, load_shards, persist_outcome, read_long_csv,
    run_experiment, write_long_csv, ExperimentConfig, ExperimentError,
};
use crate::explain::{
    cluster_statistics, feature_sharing_statistics, overclustering_flag,
    rf_feature_group_importance, ExplainError, RandomForestConfig,
};
use crate::federation::ExecutionMode;
use crate::metrics::SCAFFOLD_GROUP;
use crate::partition::{soft_split, PartitionConfig, PartitionError};
use crate::pca::{fed_pca, PcaError};
use crate::points::Points;

pub const RESULTS_ENV: &str = "FEDMOL_RESULTS_DIR";

#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn new(kind: &'static str, message: impl fmt::Display) -> Self {
        Self {
            kind,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.message.replace(['\n', '\r'], " ");
        write!(f, "fedmol: error[{}]: {}", self.kind, one_line)
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => Failure::new("io", e),
            _ => Failure::new("dataset", e),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Dataset(d) => d.into(),
            ExperimentError::Config(msg) => Failure::new("config", msg),
            ExperimentError::Io { .. } | ExperimentError::Csv(_) => Failure::new("io", e),
            ExperimentError::Partition(_) => Failure::new("partition", e),
            ExperimentError::Metric(_) => Failure::new("metric", e),
            _ => Failure::new("protocol", e),
        }
    }
}

impl From<PartitionError> for Failure {
    fn from(e: PartitionError) -> Self {
        Failure::new("partition", e)
    }
}

impl From<PcaError> for Failure {
    fn from(e: PcaError) -> Self {
        Failure::new("protocol", e)
    }
}

impl From<ExplainError> for Failure {
    fn from(e: ExplainError) -> Self {
        Failure::new("explain", e)
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new("io", format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "fedmol", version, about = "Federated clustering of molecular fingerprints")]
struct Cli {
    /// Output root; overrides $FEDMOL_RESULTS_DIR.
    #[arg(long, global = true)]
    results_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic scaffold-blob dataset.
    Generate(GenerateArgs),
    /// Split a dataset into client shards next to it (or in --out-dir).
    Partition(PartitionArgs),
    /// Run one experiment: federated method, centralized counterpart, random baseline.
    Run(RunArgs),
    /// Run a method's hyperparameter grid and rank the configurations.
    Grid(GridArgs),
    /// Explain one client's federated cluster assignment.
    Explain(ExplainArgs),
    /// Export one client's federated PCA coordinates.
    Project(ProjectArgs),
    /// Collect result files into one long-format CSV and one per-cluster CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    scaffolds: usize,
    #[arg(long, default_value_t = 25)]
    per_scaffold: usize,
    #[arg(long, default_value_t = 16)]
    core_bits: usize,
    #[arg(long, default_value_t = 1)]
    noise_bits: usize,
    #[arg(long, default_value_t = crate::dataset::DEFAULT_FINGERPRINT_BITS)]
    bits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct PartitionArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    clients: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
struct ExperimentArgs {
    /// Dataset file; repeatable. Uses `<name>.client<k>.tsv` shards when present.
    #[arg(long = "data")]
    data: Vec<PathBuf>,
    /// Flat key = value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n_he: Option<usize>,
    #[arg(long)]
    max_doublings: Option<usize>,
    /// Comma-separated ranking metrics.
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    unsafe_grid: bool,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
                ExperimentConfig::parse(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if !self.data.is_empty() {
            cfg.datasets = self.data.clone();
        }
        cfg.method = self.method.unwrap_or(cfg.method);
        cfg.n_clients = self.clients.unwrap_or(cfg.n_clients);
        cfg.k = self.k.unwrap_or(cfg.k);
        cfg.rounds = self.rounds.unwrap_or(cfg.rounds);
        cfg.p = self.p.unwrap_or(cfg.p);
        cfg.n_he = self.n_he.unwrap_or(cfg.n_he);
        cfg.max_doublings = self.max_doublings.unwrap_or(cfg.max_doublings);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.unsafe_grid |= self.unsafe_grid;
        if let Some(m) = &self.metrics {
            cfg.set("metrics", m)?;
        }
        cfg.validate()?;
        if cfg.datasets.is_empty() {
            return Err(Failure::new("config", "no dataset given (use --data)"));
        }
        for d in &cfg.datasets {
            if !d.is_file() {
                return Err(Failure::new("io", format!("{}: no such file", d.display())));
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Restrict the grid to these values; repeatable.
    #[arg(long = "only-k")]
    only_k: Vec<usize>,
    #[arg(long = "only-rounds")]
    only_rounds: Vec<usize>,
    #[arg(long = "only-p")]
    only_p: Vec<usize>,
    #[arg(long = "only-n-he")]
    only_n_he: Vec<usize>,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    client: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value = SCAFFOLD_GROUP)]
    reference_group: String,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long = "data")]
    data: PathBuf,
    #[arg(long, default_value_t = 5)]
    clients: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    client: usize,
    #[arg(long, default_value_t = 3)]
    p: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Long-format output; defaults to `<results>/report.csv`.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-cluster output; defaults to `<results>/clusters_report.csv`.
    #[arg(long)]
    clusters_output: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command, returns the exit code.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = std::io::Write::write_fmt(&mut std::io::stdout(), format_args!("{e}"));
                return 0;
            }
            let text = e.to_string();
            let (message, usage) = text.split_once("\nUsage:").unwrap_or((&text, ""));
            let message: Vec<&str> = message
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with("tip:"))
                .collect();
            let message = message.join(" ");
            eprintln!("{}", Failure::new("usage", message.trim_start_matches("error: ")));
            if !usage.is_empty() {
                eprint!("\nUsage:{usage}");
            }
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{f}");
            1
        }
    }
}

fn results_root(cli_dir: Option<PathBuf>) -> PathBuf {
    cli_dir
        .or_else(|| std::env::var_os(RESULTS_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let root = results_root(cli.results_dir);
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Partition(a) => partition(a),
        Command::Run(a) => run(a, &root),
        Command::Grid(a) => grid(a, &root),
        Command::Explain(a) => explain(a, &root),
        Command::Project(a) => project_cmd(a),
        Command::Report(a) => report(a, &root),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

fn csv_text<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::new("io", e);
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r.as_ref()).map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::new("io", e))
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let spec = SyntheticSpec::new(a.scaffolds, a.per_scaffold, a.core_bits, a.noise_bits, a.bits, a.seed);
    let (mut manifest, records) = generate_synthetic(&spec)?;
    manifest.name = crate::dataset::dataset_name_from_path(&a.output);
    let text = render_dataset(&manifest, &records)?;
    write(&a.output, text.as_bytes())?;
    println!("{}", a.output.display());
    Ok(())
}

fn partition(a: PartitionArgs) -> Result<(), Failure> {
    let (manifest, records) = read_dataset(&a.input)?;
    let part = soft_split(&records, &PartitionConfig::new(a.clients, a.seed))?;
    let dir = a
        .out_dir
        .clone()
        .or_else(|| a.input.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let mut files = Vec::new();
    for shard in &part.shards {
        let m = DatasetManifest {
            record_count: shard.len(),
            ..manifest.clone()
        };
        let path = dir.join(shard_file_name(&manifest.name, shard.client_id));
        files.push((path, render_dataset(&m, &shard.records)?));
    }
    for (path, text) in &files {
        write(path, text.as_bytes())?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(a: RunArgs, root: &Path) -> Result<(), Failure> {
    let cfg = a.exp.config()?;
    let outcome = run_experiment(&cfg)?;
    for dir in persist_outcome(root, &outcome)? {
        println!("{}", dir.display());
    }
    Ok(())
}

fn grid(a: GridArgs, root: &Path) -> Result<(), Failure> {
    let base = a.exp.config()?;
    let keep = |v: usize, only: &[usize]| only.is_empty() || only.contains(&v);
    let cells: Vec<ExperimentConfig> = base
        .grid()
        .into_iter()
        .filter(|c| {
            keep(c.k, &a.only_k)
                && keep(c.rounds, &a.only_rounds)
                && keep(c.p, &a.only_p)
                && keep(c.n_he, &a.only_n_he)
        })
        .collect();
    if cells.is_empty() {
        return Err(Failure::new("config", "grid filters left no configurations"));
    }
    let result = grid_search(&cells)?;
    for o in &result.outcomes {
        persist_outcome(root, o)?;
    }
    let ids: Vec<String> = cells.iter().map(ExperimentConfig::config_id).collect();
    let grid_hash = {
        use sha2::{Digest, Sha256};
        let d = Sha256::digest(ids.join("\n").as_bytes());
        d[..8].iter().map(|b| format!("{b:02x}")).collect::<String>()
    };
    let dir = root.join("grid").join(base.method.as_str()).join(grid_hash);
    let by_id: std::collections::BTreeMap<String, &ExperimentConfig> =
        cells.iter().map(|c| (c.config_id(), c)).collect();
    let mut rows = Vec::new();
    for (method, order) in &result.ranks.order {
        for (pos, id) in order.iter().enumerate() {
            rows.push(vec![
                method.to_string(),
                (pos + 1).to_string(),
                id.clone(),
                by_id[id].config_hash(),
                result.ranks.mean_ranks[id].to_string(),
            ]);
        }
    }
    write(
        &dir.join("ranks.csv"),
        &csv_text(&["method", "position", "config_id", "config_hash", "mean_rank"], &rows)?,
    )?;
    let failures: Vec<Vec<String>> = result
        .failures
        .iter()
        .map(|(c, e)| vec![c.config_id(), e.clone()])
        .collect();
    write(&dir.join("failures.csv"), &csv_text(&["config_id", "error"], &failures)?)?;
    println!("{}", dir.display());
    for (method, id) in &result.ranks.best {
        println!("best {method}: {id}");
    }
    Ok(())
}

fn explain(a: ExplainArgs, root: &Path) -> Result<(), Failure> {
    let cfg = a.exp.config()?;
    if cfg.datasets.len() != 1 {
        return Err(Failure::new("config", "explain takes exactly one --data"));
    }
    if a.client >= cfg.n_clients {
        return Err(Failure::new(
            "config",
            format!("client {} out of range for {} clients", a.client, cfg.n_clients),
        ));
    }
    let (name, shards) = load_shards(&cfg.datasets[0], cfg.n_clients, cfg.seed)?;
    let cmp = compare_federated_centralized(&name, &shards, &cfg)?;
    let shard = &shards[a.client];
    let assignment = &cmp.federated.assignments[a.client];
    let report = &cmp.federated.reports[a.client];

    let rf = RandomForestConfig {
        n_trees: a.trees,
        ..RandomForestConfig::with_seed(cfg.seed)
    };
    let importance = rf_feature_group_importance(shard, assignment, &rf)?;
    let stats = cluster_statistics(assignment);
    let sharing = feature_sharing_statistics(shard)?;
    let over = overclustering_flag(assignment, shard, &a.reference_group)?;

    let imp_rows: Vec<Vec<String>> = importance
        .iter()
        .map(|(g, v)| vec![g.clone(), v.to_string()])
        .collect();
    let ficf_rows: Vec<Vec<String>> = report
        .per_feature_group_ficf
        .iter()
        .map(|(g, v)| vec![g.clone(), v.to_string()])
        .collect();
    let stat_rows = vec![vec![
        stats.n_clusters.to_string(),
        stats.min_size.to_string(),
        stats.max_size.to_string(),
        stats.mean_size.to_string(),
    ]];
    let share_rows: Vec<Vec<String>> = sharing
        .iter()
        .map(|(g, s)| {
            vec![
                g.clone(),
                s.unique_values.to_string(),
                s.mean.to_string(),
                s.min.to_string(),
                s.max.to_string(),
            ]
        })
        .collect();
    let over_rows = vec![vec![
        a.reference_group.clone(),
        over.mean_cluster_size.to_string(),
        over.mean_sharing.to_string(),
        over.ratio.to_string(),
        over.flagged.to_string(),
    ]];
    let files = [
        ("importance.csv", csv_text(&["group", "importance"], &imp_rows)?),
        ("ficf.csv", csv_text(&["group", "x_f_icf"], &ficf_rows)?),
        ("cluster_stats.csv", csv_text(&["n_clusters", "min_size", "max_size", "mean_size"], &stat_rows)?),
        ("sharing.csv", csv_text(&["group", "unique_values", "mean", "min", "max"], &share_rows)?),
        (
            "overclustering.csv",
            csv_text(&["reference_group", "mean_cluster_size", "mean_sharing", "ratio", "flagged"], &over_rows)?,
        ),
    ];
    let dir = root
        .join(&name)
        .join(cfg.method.as_str())
        .join(cfg.config_hash())
        .join("explain")
        .join(format!("client{}", a.client));
    for (file, bytes) in &files {
        write(&dir.join(file), bytes)?;
    }
    println!("{}", dir.display());
    Ok(())
}

fn project_cmd(a: ProjectArgs) -> Result<(), Failure> {
    if !a.data.is_file() {
        return Err(Failure::new("io", format!("{}: no such file", a.data.display())));
    }
    if a.client >= a.clients {
        return Err(Failure::new(
            "config",
            format!("client {} out of range for {} clients", a.client, a.clients),
        ));
    }
    let (_, shards) = load_shards(&a.data, a.clients, a.seed)?;
    let points: Vec<Points> = shards.iter().map(Points::from_shard).collect();
    let pca = fed_pca(&points, a.p, ExecutionMode::Parallel)?;
    let shard = &shards[a.client];
    let coords = &pca.projected[a.client];
    let mut header = vec!["client".to_owned(), "mol_id".to_owned(), "scaffold".to_owned()];
    header.extend((1..=a.p).map(|i| format!("pc{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = shard
        .records
        .iter()
        .zip(coords.rows())
        .map(|(r, y)| {
            let mut row = vec![a.client.to_string(), r.mol_id.clone(), r.scaffold.clone()];
            row.extend(y.iter().map(f64::to_string));
            row
        })
        .collect();
    write(&a.output, &csv_text(&header, &rows)?)?;
    println!("{}", a.output.display());
    Ok(())
}

/// Result files under `root`, sorted by path.
fn collect(root: &Path, accept: &dyn Fn(&str) -> bool) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| io_failure(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| io_failure(&dir, e))?.path();
            if path.is_dir() {
                if path.file_name().is_some_and(|n| n != "explain" && n != "grid") {
                    stack.push(path);
                }
            } else if path.file_name().and_then(|n| n.to_str()).is_some_and(accept) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn is_client_csv(name: &str) -> bool {
    name.strip_prefix("client")
        .and_then(|r| r.strip_suffix(".csv"))
        .is_some_and(|k| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()))
}

fn report(a: ReportArgs, root: &Path) -> Result<(), Failure> {
    if !root.is_dir() {
        return Err(Failure::new("io", format!("{}: no results directory", root.display())));
    }
    let long_files = collect(root, &|n| n == "aggregate.csv" || is_client_csv(n))?;
    let cluster_files = collect(root, &|n| n == "clusters.csv")?;
    if long_files.is_empty() {
        return Err(Failure::new("io", format!("{}: no result files", root.display())));
    }
    let mut rows = Vec::new();
    for f in &long_files {
        rows.extend(read_long_csv(f)?);
    }
    let mut cluster_text: Vec<u8> = Vec::new();
    for (i, f) in cluster_files.iter().enumerate() {
        let text = fs::read_to_string(f).map_err(|e| io_failure(f, e))?;
        let body = if i == 0 { &text[..] } else { text.split_once('\n').map_or("", |(_, b)| b) };
        cluster_text.extend_from_slice(body.as_bytes());
    }
    let long_out = a.output.unwrap_or_else(|| root.join("report.csv"));
    let clusters_out = a.clusters_output.unwrap_or_else(|| root.join("clusters_report.csv"));
    write_long_csv(&long_out, &rows)?;
    write(&clusters_out, &cluster_text)?;
    println!("{}", long_out.display());
    println!("{}", clusters_out.display());
    Ok(())
}
