//! Long-format CSV reports.
//!
//! `client<k>.csv` and `aggregate.csv` share the columns
//! `dataset,method,setting,client,metric,value`; the aggregate uses the
//! client label `mean`. Undefined values are written as `NA`.
//! `clusters.csv` holds one row per (client, cluster) with its size, SF-ICF
//! and scaffold KLD.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Comparison, ExperimentError, ExperimentOutcome, MethodRun};
use crate::dataset::MISSING;
use crate::metrics::{Metric, MetricsReport};

pub const LONG_HEADER: [&str; 6] = ["dataset", "method", "setting", "client", "metric", "value"];
pub const CLUSTER_HEADER: [&str; 8] = [
    "dataset", "method", "setting", "client", "cluster", "size", "sf_icf", "kld",
];
pub const FLAG_HEADER: [&str; 6] = ["dataset", "method", "setting", "client", "metric", "reason"];
pub const AGGREGATE_CLIENT: &str = "mean";

#[derive(Debug, Clone, PartialEq)]
pub struct LongRow {
    pub dataset: String,
    pub method: String,
    pub setting: String,
    pub client: String,
    pub metric: String,
    pub value: Option<f64>,
}

impl LongRow {
    fn fields(&self) -> [String; 6] {
        [
            self.dataset.clone(),
            self.method.clone(),
            self.setting.clone(),
            self.client.clone(),
            self.metric.clone(),
            self.value.map_or_else(|| MISSING.to_owned(), |v| v.to_string()),
        ]
    }
}

fn report_rows(dataset: &str, run: &MethodRun, client: String, r: &MetricsReport) -> Vec<LongRow> {
    let row = |metric: String, value: Option<f64>| LongRow {
        dataset: dataset.to_owned(),
        method: run.method.to_string(),
        setting: run.setting.clone(),
        client: client.clone(),
        metric,
        value,
    };
    let mut out: Vec<LongRow> = Metric::ALL
        .iter()
        .map(|m| row(m.to_string(), r.value(*m)))
        .collect();
    for (g, v) in &r.per_feature_group_ficf {
        out.push(row(format!("ficf:{g}"), Some(*v)));
    }
    let st = &r.cluster_stats;
    out.push(row("n_clusters".into(), Some(st.n_clusters as f64)));
    out.push(row("min_cluster_size".into(), Some(st.min_size as f64)));
    out.push(row("max_cluster_size".into(), Some(st.max_size as f64)));
    out.push(row("mean_cluster_size".into(), Some(st.mean_size)));
    out
}

/// Rows for every client of `run`, followed by the aggregate rows.
pub fn long_rows(dataset: &str, run: &MethodRun) -> Vec<LongRow> {
    let mut out: Vec<LongRow> = run
        .reports
        .iter()
        .flat_map(|r| report_rows(dataset, run, r.client_id.unwrap_or(0).to_string(), r))
        .collect();
    out.extend(aggregate_rows(dataset, run));
    out
}

fn aggregate_rows(dataset: &str, run: &MethodRun) -> Vec<LongRow> {
    let mut out = report_rows(dataset, run, AGGREGATE_CLIENT.into(), &run.aggregate);
    let used = run
        .assignments
        .first()
        .and_then(|a| a.provenance.get("n_he_used"))
        .and_then(|v| v.parse::<f64>().ok());
    if let Some(v) = used {
        out.push(LongRow {
            dataset: dataset.to_owned(),
            method: run.method.to_string(),
            setting: run.setting.clone(),
            client: AGGREGATE_CLIENT.into(),
            metric: "n_he_used".into(),
            value: Some(v),
        });
    }
    out
}

pub fn cluster_rows(dataset: &str, run: &MethodRun) -> Vec<[String; 8]> {
    run.reports
        .iter()
        .flat_map(|r| {
            r.clusters.iter().map(move |c| {
                [
                    dataset.to_owned(),
                    run.method.to_string(),
                    run.setting.clone(),
                    r.client_id.unwrap_or(0).to_string(),
                    c.key.clone(),
                    c.size.to_string(),
                    c.sf_icf.to_string(),
                    c.kld.to_string(),
                ]
            })
        })
        .collect()
}

/// Why each undefined value in the run's reports is missing.
pub fn flag_rows(dataset: &str, run: &MethodRun) -> Vec<[String; 6]> {
    let clients = run
        .reports
        .iter()
        .map(|r| (r.client_id.unwrap_or(0).to_string(), r))
        .chain(std::iter::once((AGGREGATE_CLIENT.to_owned(), &run.aggregate)));
    clients
        .flat_map(|(client, r)| {
            r.flags.iter().map(move |(metric, reason)| {
                [
                    dataset.to_owned(),
                    run.method.to_string(),
                    run.setting.clone(),
                    client.clone(),
                    metric.clone(),
                    reason.clone(),
                ]
            })
        })
        .collect()
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>, ExperimentError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner()
        .map_err(|e| ExperimentError::Config(format!("csv buffer: {e}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, bytes).map_err(|e| ExperimentError::io(path, e))
}

pub fn write_long_csv(path: &Path, rows: &[LongRow]) -> Result<(), ExperimentError> {
    write_file(path, &csv_bytes(&LONG_HEADER, rows.iter().map(LongRow::fields))?)
}

pub fn write_cluster_csv(path: &Path, rows: &[[String; 8]]) -> Result<(), ExperimentError> {
    write_file(path, &csv_bytes(&CLUSTER_HEADER, rows)?)
}

pub fn read_long_csv(path: &Path) -> Result<Vec<LongRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(LONG_HEADER) {
        return Err(ExperimentError::Config(format!(
            "{}: not a long-format report",
            path.display()
        )));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let value = match &rec[5] {
                v if v == MISSING => None,
                v => Some(v.parse().map_err(|_| {
                    ExperimentError::Config(format!("{}: bad value {v:?}", path.display()))
                })?),
            };
            Ok(LongRow {
                dataset: rec[0].to_owned(),
                method: rec[1].to_owned(),
                setting: rec[2].to_owned(),
                client: rec[3].to_owned(),
                metric: rec[4].to_owned(),
                value,
            })
        })
        .collect()
}

fn persist_run(
    root: &Path,
    comparison: &Comparison,
    run: &MethodRun,
    outcome: &ExperimentOutcome,
) -> Result<PathBuf, ExperimentError> {
    let dir = root
        .join(&comparison.dataset)
        .join(run.method.as_str())
        .join(outcome.config.config_hash());
    fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
    let d = &comparison.dataset;
    for r in &run.reports {
        let client = r.client_id.unwrap_or(0);
        let rows = report_rows(d, run, client.to_string(), r);
        write_long_csv(&dir.join(format!("client{client}.csv")), &rows)?;
    }
    write_long_csv(&dir.join("aggregate.csv"), &aggregate_rows(d, run))?;
    write_cluster_csv(&dir.join("clusters.csv"), &cluster_rows(d, run))?;
    write_file(&dir.join("flags.csv"), &csv_bytes(&FLAG_HEADER, flag_rows(d, run))?)?;
    write_file(&dir.join("config.txt"), outcome.config.to_text().as_bytes())?;
    Ok(dir)
}

/// Writes `<root>/<dataset>/<method>/<config-hash>/` for every run of the
/// outcome and returns the directories.
pub fn persist_outcome(root: &Path, outcome: &ExperimentOutcome) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut dirs = Vec::new();
    for c in &outcome.comparisons {
        for run in c.runs() {
            dirs.push(persist_run(root, c, run, outcome)?);
        }
    }
    Ok(dirs)
}
