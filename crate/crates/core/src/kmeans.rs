//! Federated k-means and the centralized Lloyd baseline.
//!
//! Each round the server broadcasts the global centroids; every client runs
//! one Lloyd step on its own points and returns per-cluster means and counts;
//! the server replaces each centroid with the count-weighted average of the
//! client means. Clusters nobody claimed keep their previous centroid.

use rand::Rng;
use thiserror::Error;

use crate::assignment::{ClusterAssignment, Method};
use crate::federation::{
    run_federation, ClientContext, ExecutionMode, FederatedProtocol, FederationConfig,
    FederationError, RoundMessage,
};
use crate::points::{squared_euclidean, Points};
use crate::seed::rng_from;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KMeansError {
    #[error("k must be >= 1")]
    ZeroK,
    #[error("k = {k} exceeds the {points} available points")]
    TooFewPoints { k: usize, points: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("inconsistent message: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Federation(#[from] FederationError),
}

impl From<KMeansError> for FederationError {
    fn from(e: KMeansError) -> Self {
        match e {
            KMeansError::Federation(f) => f,
            other => FederationError::Aggregation(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    pub centroids: Points,
    pub counts: Vec<usize>,
}

impl CentroidModel {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.dim()
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        self.centroids.row(j)
    }

    /// Nearest centroid by squared Euclidean distance; ties go to the lower index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for j in 0..self.k() {
            let d = squared_euclidean(x, self.centroid(j));
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }

    pub fn assign(&self, points: &Points) -> Vec<usize> {
        points.rows().map(|x| self.nearest(x).0).collect()
    }
}

/// Sum of squared distances from each point to its nearest centroid.
pub fn inertia(points: &Points, model: &CentroidModel) -> f64 {
    points.rows().map(|x| model.nearest(x).1).sum()
}

/// k-means++ seeding: first centroid uniform, then D²-weighted sampling.
pub fn kmeanspp_init(points: &Points, k: usize, seed: u64) -> Result<CentroidModel, KMeansError> {
    if k == 0 {
        return Err(KMeansError::ZeroK);
    }
    let n = points.len();
    if k > n {
        return Err(KMeansError::TooFewPoints { k, points: n });
    }
    let mut rng = rng_from(seed);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .rows()
        .map(|x| squared_euclidean(x, points.row(chosen[0])))
        .collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && target < acc {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just past the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            // every remaining point coincides with a centroid
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, x) in points.rows().enumerate() {
            let d = squared_euclidean(x, points.row(next));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    Ok(CentroidModel {
        centroids: points.select(&chosen),
        counts: vec![0; k],
    })
}

/// A client's reply: per-cluster means of its points and the matching counts.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub centroids: Points,
    pub counts: Vec<usize>,
}

fn check_dim(points: &Points, model: &CentroidModel) -> Result<(), KMeansError> {
    if !points.is_empty() && points.dim() != model.dim() {
        return Err(KMeansError::Dimension {
            expected: model.dim(),
            found: points.dim(),
        });
    }
    Ok(())
}

/// One Lloyd step of `points` against `global`.
pub fn local_kmeans_step(points: &Points, global: &CentroidModel) -> Result<LocalUpdate, KMeansError> {
    check_dim(points, global)?;
    let (k, dim) = (global.k(), global.dim());
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for x in points.rows() {
        let j = global.nearest(x).0;
        counts[j] += 1;
        sums[j * dim..(j + 1) * dim]
            .iter_mut()
            .zip(x)
            .for_each(|(s, v)| *s += v);
    }
    for j in 0..k {
        let row = &mut sums[j * dim..(j + 1) * dim];
        if counts[j] == 0 {
            row.copy_from_slice(global.centroid(j));
        } else {
            let c = counts[j] as f64;
            row.iter_mut().for_each(|s| *s /= c);
        }
    }
    Ok(LocalUpdate {
        centroids: Points::new(dim, sums),
        counts,
    })
}

/// Count-weighted average of client means; empty clusters keep `previous`.
///
/// A cluster with a single contributing client takes that client's mean
/// verbatim (the weighted average of one value).
pub fn aggregate_centroids(
    previous: &CentroidModel,
    messages: &[LocalUpdate],
) -> Result<CentroidModel, KMeansError> {
    let (k, dim) = (previous.k(), previous.dim());
    for m in messages {
        if m.counts.len() != k || m.centroids.len() != k {
            return Err(KMeansError::Inconsistent(format!(
                "expected {k} centroids, got {}",
                m.counts.len()
            )));
        }
        if m.centroids.dim() != dim {
            return Err(KMeansError::Dimension {
                expected: dim,
                found: m.centroids.dim(),
            });
        }
    }
    let mut data = Vec::with_capacity(k * dim);
    let mut counts = vec![0usize; k];
    for j in 0..k {
        let contributors: Vec<&LocalUpdate> = messages.iter().filter(|m| m.counts[j] > 0).collect();
        let total: usize = contributors.iter().map(|m| m.counts[j]).sum();
        counts[j] = total;
        match contributors.as_slice() {
            [] => data.extend_from_slice(previous.centroid(j)),
            [only] => data.extend_from_slice(only.centroids.row(j)),
            many => {
                let mut acc = vec![0.0; dim];
                for m in many {
                    let w = m.counts[j] as f64;
                    acc.iter_mut()
                        .zip(m.centroids.row(j))
                        .for_each(|(a, v)| *a += w * v);
                }
                let t = total as f64;
                data.extend(acc.into_iter().map(|a| a / t));
            }
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(KMeansError::Inconsistent("non-finite centroid".into()));
    }
    Ok(CentroidModel {
        centroids: Points::new(dim, data),
        counts,
    })
}

/// Fed-kMeans as a federation protocol over per-client point sets.
///
/// Client 0 seeds the global model with k-means++ on its own points.
#[derive(Debug, Clone)]
pub struct FedKMeansProtocol {
    pub k: usize,
    pub local_iterations: usize,
    pub seed: u64,
    pub method: Method,
}

impl FedKMeansProtocol {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            local_iterations: 1,
            seed,
            method: Method::FedKMeans,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansServerState {
    pub model: CentroidModel,
}

pub enum KMeansPayload {
    Init(CentroidModel),
    Update(LocalUpdate),
}

impl FederatedProtocol for FedKMeansProtocol {
    type ClientData = Points;
    type State = KMeansServerState;
    type Payload = KMeansPayload;
    type Output = ClusterAssignment;

    fn setup_client(&self) -> Option<usize> {
        Some(0)
    }

    fn client_setup(
        &self,
        ctx: &ClientContext,
        data: &Points,
    ) -> Result<KMeansPayload, FederationError> {
        kmeanspp_init(data, self.k, self.seed)
            .map(KMeansPayload::Init)
            .map_err(|e| FederationError::Client {
                client: ctx.client_id,
                reason: format!("k-means++ initialization: {e}"),
            })
    }

    fn init_server(
        &self,
        setup: Option<RoundMessage<KMeansPayload>>,
    ) -> Result<KMeansServerState, FederationError> {
        match setup.map(|m| m.payload) {
            Some(KMeansPayload::Init(model)) => Ok(KMeansServerState { model }),
            _ => Err(FederationError::Aggregation(
                "missing k-means++ initialization".into(),
            )),
        }
    }

    fn client_update(
        &self,
        _ctx: &ClientContext,
        data: &Points,
        state: &KMeansServerState,
    ) -> Result<KMeansPayload, FederationError> {
        let mut local = local_kmeans_step(data, &state.model)?;
        for _ in 1..self.local_iterations {
            let model = CentroidModel {
                centroids: local.centroids.clone(),
                counts: local.counts.clone(),
            };
            local = local_kmeans_step(data, &model)?;
        }
        Ok(KMeansPayload::Update(local))
    }

    fn aggregate(
        &self,
        state: &KMeansServerState,
        messages: Vec<RoundMessage<KMeansPayload>>,
    ) -> Result<KMeansServerState, FederationError> {
        let updates: Vec<LocalUpdate> = messages
            .into_iter()
            .map(|m| match m.payload {
                KMeansPayload::Update(u) => Ok(u),
                KMeansPayload::Init(_) => Err(FederationError::Aggregation(
                    "initialization message inside a round".into(),
                )),
            })
            .collect::<Result<_, _>>()?;
        Ok(KMeansServerState {
            model: aggregate_centroids(&state.model, &updates)?,
        })
    }

    fn client_output(
        &self,
        _ctx: &ClientContext,
        data: &Points,
        state: &KMeansServerState,
    ) -> Result<ClusterAssignment, FederationError> {
        check_dim(data, &state.model)?;
        Ok(ClusterAssignment::from_labels(self.method, &state.model.assign(data))
            .with_provenance("k", self.k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub model: CentroidModel,
    pub assignments: Vec<ClusterAssignment>,
}

pub fn fed_kmeans(
    clients: &[Points],
    k: usize,
    rounds: usize,
    seed: u64,
    mode: ExecutionMode,
) -> Result<KMeansResult, KMeansError> {
    run_fed_kmeans(clients, &FedKMeansProtocol::new(k, seed), rounds, mode)
}

pub fn run_fed_kmeans(
    clients: &[Points],
    protocol: &FedKMeansProtocol,
    rounds: usize,
    mode: ExecutionMode,
) -> Result<KMeansResult, KMeansError> {
    let total: usize = clients.iter().map(Points::len).sum();
    if protocol.k == 0 {
        return Err(KMeansError::ZeroK);
    }
    if total < protocol.k {
        return Err(KMeansError::TooFewPoints {
            k: protocol.k,
            points: total,
        });
    }
    let cfg = FederationConfig::new(clients.len(), rounds, protocol.seed);
    let res = run_federation(clients, protocol, &cfg, mode)?;
    let assignments = res
        .outputs
        .into_iter()
        .map(|a| a.with_provenance("rounds", rounds))
        .collect();
    Ok(KMeansResult {
        model: res.state.model,
        assignments,
    })
}

/// k-means++ followed by `iterations` Lloyd steps on pooled points.
pub fn centralized_kmeans(
    points: &Points,
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<(CentroidModel, ClusterAssignment), KMeansError> {
    let mut model = kmeanspp_init(points, k, seed)?;
    let dim = points.dim();
    for _ in 0..iterations {
        let labels = model.assign(points);
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (x, &j) in points.rows().zip(&labels) {
            counts[j] += 1;
            sums[j * dim..(j + 1) * dim]
                .iter_mut()
                .zip(x)
                .for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            let row = &mut sums[j * dim..(j + 1) * dim];
            if counts[j] == 0 {
                row.copy_from_slice(model.centroid(j));
            } else {
                let c = counts[j] as f64;
                row.iter_mut().for_each(|s| *s /= c);
            }
        }
        model = CentroidModel {
            centroids: Points::new(dim, sums),
            counts,
        };
    }
    let labels = model.assign(points);
    let assignment = ClusterAssignment::from_labels(Method::CentralizedKMeans, &labels)
        .with_provenance("k", k)
        .with_provenance("rounds", iterations);
    Ok((model, assignment))
}
