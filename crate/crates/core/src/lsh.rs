//! Entropy-bit locality-sensitive hashing, federated and centralized.
//!
//! Molecules are binned by their values at a small set of high-entropy
//! fingerprint positions. In the federated variant each client reports only
//! the indices of its top-`n_he` entropy positions; the server intersects
//! them, doubling `n_he` on every client while the intersection is empty.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::assignment::{ClusterAssignment, Method};
use crate::dataset::Fingerprint;
use crate::federation::{
    run_federation, ClientContext, ExecutionMode, FederatedProtocol, FederationConfig,
    FederationError, RoundMessage,
};

pub const DEFAULT_N_HE: usize = 32;
pub const DEFAULT_MAX_DOUBLINGS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LshError {
    #[error("n_he = {n_he} must lie in 1..={bits}")]
    InvalidNHe { n_he: usize, bits: usize },
    #[error("bit index {index} out of range for {bits}-bit fingerprints")]
    BitOutOfRange { index: usize, bits: usize },
    #[error("empty input")]
    Empty,
    #[error("high-entropy bit intersection still empty at n_he = {n_he}")]
    EmptyIntersection { n_he: usize },
    #[error(transparent)]
    Federation(#[from] FederationError),
}

/// Shannon entropy in bits of a Bernoulli(q) variable; `H(0) = H(1) = 0`.
pub fn bit_entropy(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        return 0.0;
    }
    -(q * q.log2() + (1.0 - q) * (1.0 - q).log2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitEntropyTable {
    pub entropies: Vec<f64>,
}

impl BitEntropyTable {
    pub fn from_fingerprints(fps: &[Fingerprint]) -> Result<Self, LshError> {
        let first = fps.first().ok_or(LshError::Empty)?;
        let mut ones = vec![0usize; first.len()];
        for fp in fps {
            fp.ones().for_each(|i| ones[i] += 1);
        }
        let n = fps.len() as f64;
        Ok(Self {
            entropies: ones.into_iter().map(|c| bit_entropy(c as f64 / n)).collect(),
        })
    }

    /// Indices of the `n` largest entropies, ties to the lower index.
    pub fn top(&self, n: usize) -> BTreeSet<usize> {
        let mut order: Vec<usize> = (0..self.entropies.len()).collect();
        order.sort_by(|&a, &b| {
            self.entropies[b]
                .total_cmp(&self.entropies[a])
                .then(a.cmp(&b))
        });
        order.into_iter().take(n).collect()
    }
}

pub fn local_top_entropy_bits(fps: &[Fingerprint], n_he: usize) -> Result<BTreeSet<usize>, LshError> {
    let table = BitEntropyTable::from_fingerprints(fps)?;
    let bits = table.entropies.len();
    if n_he == 0 || n_he > bits {
        return Err(LshError::InvalidNHe { n_he, bits });
    }
    Ok(table.top(n_he))
}

pub fn intersect_bits(messages: &[BTreeSet<usize>]) -> BTreeSet<usize> {
    let mut iter = messages.iter();
    let Some(first) = iter.next() else {
        return BTreeSet::new();
    };
    iter.fold(first.clone(), |acc, s| acc.intersection(s).copied().collect())
}

/// Bin key: the fingerprint's values at the selected positions, as `0`/`1`.
pub fn bin_key(fp: &Fingerprint, bits: &BTreeSet<usize>) -> String {
    bits.iter().map(|&i| if fp.get(i) { '1' } else { '0' }).collect()
}

pub fn lsh_assign(
    fps: &[Fingerprint],
    global_bits: &BTreeSet<usize>,
    method: Method,
) -> Result<ClusterAssignment, LshError> {
    if let (Some(fp), Some(&max)) = (fps.first(), global_bits.last()) {
        if max >= fp.len() {
            return Err(LshError::BitOutOfRange {
                index: max,
                bits: fp.len(),
            });
        }
    }
    let keys: Vec<String> = fps.iter().map(|fp| bin_key(fp, global_bits)).collect();
    Ok(ClusterAssignment::from_keys(method, &keys).with_provenance("n_bits", global_bits.len()))
}

/// Global cluster ids from the sorted union of bin keys across clients.
pub fn global_cluster_ids(assignments: &[ClusterAssignment]) -> BTreeMap<String, usize> {
    let keys: BTreeSet<&str> = assignments
        .iter()
        .flat_map(|a| a.cluster_keys.iter().map(String::as_str))
        .collect();
    keys.into_iter()
        .enumerate()
        .map(|(i, k)| (k.to_owned(), i))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FedLshProtocol {
    pub n_he: usize,
    pub max_doublings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LshServerState {
    /// `n_he` the clients should use next (or used for `bits`).
    pub n_he: usize,
    pub doublings: usize,
    pub bits: Option<BTreeSet<usize>>,
}

/// `(n_he used, top set, fingerprint length)`.
pub type TopBitsReport = (usize, BTreeSet<usize>, usize);

impl FederatedProtocol for FedLshProtocol {
    type ClientData = Vec<Fingerprint>;
    type State = LshServerState;
    type Payload = TopBitsReport;
    type Output = ClusterAssignment;

    fn init_server(
        &self,
        _setup: Option<RoundMessage<TopBitsReport>>,
    ) -> Result<LshServerState, FederationError> {
        Ok(LshServerState {
            n_he: self.n_he,
            doublings: 0,
            bits: None,
        })
    }

    fn client_update(
        &self,
        ctx: &ClientContext,
        data: &Vec<Fingerprint>,
        state: &LshServerState,
    ) -> Result<TopBitsReport, FederationError> {
        let bits = data.first().map_or(0, Fingerprint::len);
        let n_he = state.n_he.min(bits);
        local_top_entropy_bits(data, n_he)
            .map(|top| (n_he, top, bits))
            .map_err(|e| FederationError::Client {
                client: ctx.client_id,
                reason: e.to_string(),
            })
    }

    fn aggregate(
        &self,
        state: &LshServerState,
        messages: Vec<RoundMessage<TopBitsReport>>,
    ) -> Result<LshServerState, FederationError> {
        let used = messages.iter().map(|m| m.payload.0).max().unwrap_or(state.n_he);
        let width = messages.iter().map(|m| m.payload.2).max().unwrap_or(0);
        let sets: Vec<BTreeSet<usize>> = messages.into_iter().map(|m| m.payload.1).collect();
        let common = intersect_bits(&sets);
        let mut next = state.clone();
        if !common.is_empty() {
            next.n_he = used;
            next.bits = Some(common);
        } else if used >= width || state.doublings >= self.max_doublings {
            return Err(FederationError::Aggregation(
                LshError::EmptyIntersection { n_he: used }.to_string(),
            ));
        } else {
            next.n_he = (used * 2).min(width);
            next.doublings += 1;
        }
        Ok(next)
    }

    fn is_complete(&self, state: &LshServerState) -> bool {
        state.bits.is_some()
    }

    fn client_output(
        &self,
        ctx: &ClientContext,
        data: &Vec<Fingerprint>,
        state: &LshServerState,
    ) -> Result<ClusterAssignment, FederationError> {
        let bits = state.bits.as_ref().ok_or_else(|| {
            FederationError::Aggregation(
                LshError::EmptyIntersection { n_he: state.n_he }.to_string(),
            )
        })?;
        lsh_assign(data, bits, Method::FedLsh)
            .map(|a| a.with_provenance("n_he", self.n_he))
            .map_err(|e| FederationError::Client {
                client: ctx.client_id,
                reason: e.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LshResult {
    pub global_bits: BTreeSet<usize>,
    /// `n_he` at which the intersection became non-empty.
    pub n_he_used: usize,
    pub assignments: Vec<ClusterAssignment>,
}

pub fn fed_lsh(
    clients: &[Vec<Fingerprint>],
    n_he: usize,
    max_doublings: usize,
    mode: ExecutionMode,
) -> Result<LshResult, LshError> {
    let width = clients
        .iter()
        .find_map(|c| c.first())
        .map(Fingerprint::len)
        .ok_or(LshError::Empty)?;
    if n_he == 0 || n_he > width {
        return Err(LshError::InvalidNHe { n_he, bits: width });
    }
    let protocol = FedLshProtocol {
        n_he,
        max_doublings,
    };
    let cfg = FederationConfig::new(clients.len(), max_doublings + 1, 0);
    let res = run_federation(clients, &protocol, &cfg, mode)?;
    let global_bits = res
        .state
        .bits
        .clone()
        .ok_or(LshError::EmptyIntersection { n_he: res.state.n_he })?;
    Ok(LshResult {
        global_bits,
        n_he_used: res.state.n_he,
        assignments: res.outputs,
    })
}

/// Top-`n_he` entropy bits of the pooled data, then binning.
pub fn centralized_lsh(
    fps: &[Fingerprint],
    n_he: usize,
) -> Result<(BTreeSet<usize>, ClusterAssignment), LshError> {
    let bits = local_top_entropy_bits(fps, n_he)?;
    let assignment =
        lsh_assign(fps, &bits, Method::CentralizedLsh)?.with_provenance("n_he", n_he);
    Ok((bits, assignment))
}
