//! Federated PCA from additive covariance partials.
//!
//! Each client sends `(Σx, Σxxᵀ, n)` over its own points. The server sums the
//! partials and expands the scatter matrix around the global mean,
//! `C = Σxxᵀ - (Σx)(Σx)ᵀ / M`, which is exactly the pooled scatter matrix.
//! The projection is the top-`p` eigenvectors of `C`.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::federation::{
    run_federation, ClientContext, ExecutionMode, FederatedProtocol, FederationConfig,
    FederationError, RoundMessage,
};
use crate::kmeans::{run_fed_kmeans, FedKMeansProtocol, KMeansError, KMeansResult};
use crate::assignment::Method;
use crate::points::Points;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcaError {
    #[error("need at least 2 points in total, got {0}")]
    TooFewPoints(usize),
    #[error("p = {p} must lie in 1..={dim}")]
    InvalidComponents { p: usize, dim: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("no covariance partials received")]
    NoMessages,
    #[error("symmetric eigensolver did not converge")]
    NoConvergence,
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
}

/// Additive sufficient statistics for a scatter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAccumulator {
    pub dim: usize,
    pub sum_x: Vec<f64>,
    /// Row-major `dim × dim`, symmetric.
    pub sum_outer: Vec<f64>,
    pub count: usize,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            sum_x: vec![0.0; dim],
            sum_outer: vec![0.0; dim * dim],
            count: 0,
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim, "dimension mismatch");
        let nz: Vec<(usize, f64)> = x
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .collect();
        for &(i, xi) in &nz {
            self.sum_x[i] += xi;
            let row = &mut self.sum_outer[i * self.dim..(i + 1) * self.dim];
            for &(j, xj) in &nz {
                row[j] += xi * xj;
            }
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), PcaError> {
        if other.dim != self.dim {
            return Err(PcaError::Dimension {
                expected: self.dim,
                found: other.dim,
            });
        }
        self.sum_x
            .iter_mut()
            .zip(&other.sum_x)
            .for_each(|(a, b)| *a += b);
        self.sum_outer
            .iter_mut()
            .zip(&other.sum_outer)
            .for_each(|(a, b)| *a += b);
        self.count += other.count;
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        let m = self.count as f64;
        self.sum_x.iter().map(|s| s / m).collect()
    }
}

/// Client-side partial sums; no individual point leaves the client.
pub fn local_covariance_partials(points: &Points) -> CovarianceAccumulator {
    let mut acc = CovarianceAccumulator::new(points.dim());
    points.rows().for_each(|x| acc.add(x));
    acc
}

fn merged(messages: &[CovarianceAccumulator]) -> Result<CovarianceAccumulator, PcaError> {
    let first = messages.first().ok_or(PcaError::NoMessages)?;
    let mut total = CovarianceAccumulator::new(first.dim);
    for m in messages {
        total.merge(m)?;
    }
    Ok(total)
}

fn scatter_from(total: &CovarianceAccumulator) -> Result<DMatrix<f64>, PcaError> {
    if total.count < 2 {
        return Err(PcaError::TooFewPoints(total.count));
    }
    let (d, m) = (total.dim, total.count as f64);
    let c = DMatrix::from_fn(d, d, |i, j| {
        total.sum_outer[i * d + j] - total.sum_x[i] * total.sum_x[j] / m
    });
    Ok((&c + c.transpose()) * 0.5)
}

/// Unnormalized scatter matrix of the union of all clients' points.
pub fn assemble_covariance(messages: &[CovarianceAccumulator]) -> Result<DMatrix<f64>, PcaError> {
    scatter_from(&merged(messages)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    /// `p` orthonormal rows of length `F`.
    pub components: Points,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
}

impl ProjectionMatrix {
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project_one(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .rows()
            .map(|c| {
                c.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(ci, (xi, mi))| ci * (xi - mi))
                    .sum()
            })
            .collect()
    }

    /// `Pᵀ y + mean`.
    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, yi) in self.components.rows().zip(y) {
            x.iter_mut().zip(c).for_each(|(xj, cj)| *xj += yi * cj);
        }
        x
    }
}

/// Top-`p` eigenpairs of a symmetric matrix.
///
/// Coordinates with zero variance only add zero eigenvalues with unit
/// eigenvectors, so the solver runs on the sub-matrix of coordinates with a
/// positive diagonal and the rest is filled in with unit vectors. Each
/// component is signed so that its largest-magnitude entry is positive.
pub fn top_eigenpairs(
    cov: &DMatrix<f64>,
    p: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), PcaError> {
    let d = cov.nrows();
    if p == 0 || p > d {
        return Err(PcaError::InvalidComponents { p, dim: d });
    }
    let active: Vec<usize> = (0..d).filter(|&i| cov[(i, i)] > 0.0).collect();
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(d);
    if !active.is_empty() {
        let sub = DMatrix::from_fn(active.len(), active.len(), |a, b| cov[(active[a], active[b])]);
        let eig = SymmetricEigen::try_new(sub, f64::EPSILON, 0).ok_or(PcaError::NoConvergence)?;
        for (col, &lambda) in eig.eigenvalues.iter().enumerate() {
            let mut v = vec![0.0; d];
            for (a, &i) in active.iter().enumerate() {
                v[i] = eig.eigenvectors[(a, col)];
            }
            pairs.push((lambda, v));
        }
        // stable order for equal eigenvalues: by original solver column
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    }
    let mut inactive = (0..d).filter(|i| !active.contains(i));
    while pairs.len() < p {
        let i = inactive.next().expect("p <= d");
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        pairs.push((0.0, v));
    }
    pairs.truncate(p);

    let mut vectors = Vec::with_capacity(p);
    let mut values = Vec::with_capacity(p);
    for (lambda, mut v) in pairs {
        let lead = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1 { (i, x.abs()) } else { best })
            .0;
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.push(v);
        values.push(lambda);
    }
    Ok((vectors, values))
}

fn projection_from(total: &CovarianceAccumulator, p: usize) -> Result<ProjectionMatrix, PcaError> {
    if p == 0 || p > total.dim {
        return Err(PcaError::InvalidComponents { p, dim: total.dim });
    }
    let cov = scatter_from(total)?;
    let (vectors, eigenvalues) = top_eigenpairs(&cov, p)?;
    Ok(ProjectionMatrix {
        components: Points::from_rows(&vectors),
        eigenvalues,
        mean: total.mean(),
    })
}

pub fn projection_from_partials(
    messages: &[CovarianceAccumulator],
    p: usize,
) -> Result<ProjectionMatrix, PcaError> {
    projection_from(&merged(messages)?, p)
}

/// `y = P (x - mean)` for every row, order preserved.
pub fn project(points: &Points, proj: &ProjectionMatrix) -> Result<Points, PcaError> {
    if points.dim() != proj.input_dim() {
        return Err(PcaError::Dimension {
            expected: proj.input_dim(),
            found: points.dim(),
        });
    }
    let mut data = Vec::with_capacity(points.len() * proj.p());
    for x in points.rows() {
        data.extend(proj.project_one(x));
    }
    Ok(Points::new(proj.p(), data))
}

/// One-round Fed-PCA; each client's output is its own projected points.
#[derive(Debug, Clone)]
pub struct FedPcaProtocol {
    pub p: usize,
}

impl FederatedProtocol for FedPcaProtocol {
    type ClientData = Points;
    type State = Option<ProjectionMatrix>;
    type Payload = CovarianceAccumulator;
    type Output = Points;

    fn init_server(
        &self,
        _setup: Option<RoundMessage<CovarianceAccumulator>>,
    ) -> Result<Self::State, FederationError> {
        Ok(None)
    }

    fn client_update(
        &self,
        _ctx: &ClientContext,
        data: &Points,
        _state: &Self::State,
    ) -> Result<CovarianceAccumulator, FederationError> {
        Ok(local_covariance_partials(data))
    }

    fn aggregate(
        &self,
        _state: &Self::State,
        messages: Vec<RoundMessage<CovarianceAccumulator>>,
    ) -> Result<Self::State, FederationError> {
        let partials: Vec<CovarianceAccumulator> = messages.into_iter().map(|m| m.payload).collect();
        projection_from_partials(&partials, self.p)
            .map(Some)
            .map_err(|e| FederationError::Aggregation(e.to_string()))
    }

    fn is_complete(&self, state: &Self::State) -> bool {
        state.is_some()
    }

    fn client_output(
        &self,
        ctx: &ClientContext,
        data: &Points,
        state: &Self::State,
    ) -> Result<Points, FederationError> {
        let proj = state
            .as_ref()
            .ok_or_else(|| FederationError::Aggregation("projection missing".into()))?;
        project(data, proj).map_err(|e| FederationError::Client {
            client: ctx.client_id,
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedPcaResult {
    pub projection: ProjectionMatrix,
    pub projected: Vec<Points>,
}

pub fn fed_pca(clients: &[Points], p: usize, mode: ExecutionMode) -> Result<FedPcaResult, PcaError> {
    let total: usize = clients.iter().map(Points::len).sum();
    if total < 2 {
        return Err(PcaError::TooFewPoints(total));
    }
    let cfg = FederationConfig::new(clients.len(), 1, 0);
    let res = run_federation(clients, &FedPcaProtocol { p }, &cfg, mode)?;
    let projection = res.state.expect("one completed round");
    Ok(FedPcaResult {
        projection,
        projected: res.outputs,
    })
}

pub fn centralized_pca(points: &Points, p: usize) -> Result<ProjectionMatrix, PcaError> {
    projection_from(&local_covariance_partials(points), p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaKMeansResult {
    pub pca: FedPcaResult,
    pub kmeans: KMeansResult,
}

/// Fed-PCA to `p` dimensions followed by Fed-kMeans on the projected shards.
pub fn fed_pca_kmeans(
    clients: &[Points],
    p: usize,
    k: usize,
    rounds: usize,
    seed: u64,
    mode: ExecutionMode,
) -> Result<PcaKMeansResult, PcaError> {
    let pca = fed_pca(clients, p, mode)?;
    let mut protocol = FedKMeansProtocol::new(k, seed);
    protocol.method = Method::FedPcaKMeans;
    let mut kmeans = run_fed_kmeans(&pca.projected, &protocol, rounds, mode)?;
    for a in &mut kmeans.assignments {
        a.provenance.insert("p".into(), p.to_string());
    }
    Ok(PcaKMeansResult { pca, kmeans })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record_partials() {
        let acc = local_covariance_partials(&Points::from_rows(&[vec![2.0, 3.0]]));
        assert_eq!(acc.sum_x, vec![2.0, 3.0]);
        assert_eq!(acc.sum_outer, vec![4.0, 6.0, 6.0, 9.0]);
        assert_eq!(acc.count, 1);
    }

    #[test]
    fn unit_vector_partials() {
        let acc = local_covariance_partials(&Points::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        assert_eq!(acc.sum_x, vec![1.0, 1.0]);
        assert_eq!(acc.sum_outer, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(acc.count, 2);
    }

    #[test]
    fn partials_are_additive() {
        let pts = Points::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 3.0]]);
        let whole = local_covariance_partials(&pts);
        let mut a = local_covariance_partials(&pts.select(&[0]));
        a.merge(&local_covariance_partials(&pts.select(&[1, 2]))).unwrap();
        assert_eq!(a, whole);
    }

    #[test]
    fn scatter_examples() {
        let same = local_covariance_partials(&Points::from_rows(&vec![vec![1.0, 1.0]; 3]));
        assert_eq!(assemble_covariance(&[same]).unwrap(), DMatrix::zeros(2, 2));

        let two = local_covariance_partials(&Points::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]));
        assert_eq!(
            assemble_covariance(&[two]).unwrap(),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])
        );

        let one = local_covariance_partials(&Points::from_rows(&[vec![1.0]]));
        assert_eq!(assemble_covariance(&[one]).unwrap_err(), PcaError::TooFewPoints(1));
        assert_eq!(assemble_covariance(&[]).unwrap_err(), PcaError::NoMessages);
    }

    #[test]
    fn line_data_has_one_component() {
        let pts = Points::from_rows(
            &(0..6)
                .map(|t| vec![1.0 + 3.0 * t as f64, 2.0 + 4.0 * t as f64])
                .collect::<Vec<_>>(),
        );
        let proj = centralized_pca(&pts, 2).unwrap();
        let c = proj.components.row(0);
        assert!((c[0] * 0.6 + c[1] * 0.8).abs() > 1.0 - 1e-8);
        assert!(c[0] > 0.0 && c[1] > 0.0);
        assert!(proj.eigenvalues[1].abs() < 1e-8);
    }

    #[test]
    fn full_rank_projection_reconstructs() {
        let pts = Points::from_rows(&[
            vec![1.0, 0.0, 2.0],
            vec![0.5, 1.0, -1.0],
            vec![2.0, 2.0, 0.0],
            vec![-1.0, 0.3, 0.7],
        ]);
        let proj = centralized_pca(&pts, 3).unwrap();
        for x in pts.rows() {
            let back = proj.reconstruct(&proj.project_one(x));
            for (a, b) in back.iter().zip(x) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        let y = proj.project_one(&proj.mean);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_variance_coordinates() {
        let pts = Points::from_rows(&[vec![1.0, 5.0, 0.0], vec![3.0, 5.0, 0.0], vec![2.0, 5.0, 0.0]]);
        let proj = centralized_pca(&pts, 3).unwrap();
        assert_eq!(proj.components.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(proj.eigenvalues, vec![2.0, 0.0, 0.0]);
        assert_eq!(proj.components.row(1), &[0.0, 1.0, 0.0]);
        let y = project(&pts, &proj).unwrap();
        assert!(y.rows().all(|r| r[1] == 0.0 && r[2] == 0.0));
    }

    #[test]
    fn invalid_requests() {
        let pts = Points::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(centralized_pca(&pts, 0), Err(PcaError::InvalidComponents { .. })));
        assert!(matches!(centralized_pca(&pts, 3), Err(PcaError::InvalidComponents { .. })));
        let proj = centralized_pca(&pts, 1).unwrap();
        assert!(matches!(
            project(&Points::from_rows(&[vec![1.0]]), &proj),
            Err(PcaError::Dimension { .. })
        ));
    }
}
