//! In-process, round-based federation runtime.
//!
//! A [`FederatedProtocol`] only ever sees one client's private data at a time
//! (through [`FederatedProtocol::client_update`]) and the server only ever
//! sees [`RoundMessage`]s. Aggregation folds messages in ascending client id,
//! so sequential and parallel client execution give identical results.

use rayon::prelude::*;
use thiserror::Error;

use crate::seed::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FederationError {
    #[error("expected {expected} client datasets, got {found}")]
    ClientCount { expected: usize, found: usize },
    #[error("rounds must be >= 1")]
    NoRounds,
    #[error("client {client}: {reason}")]
    Client { client: usize, reason: String },
    #[error("aggregation failed: {0}")]
    Aggregation(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub n_clients: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl FederationConfig {
    pub fn new(n_clients: usize, rounds: usize, seed: u64) -> Self {
        Self {
            n_clients,
            rounds,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    #[default]
    Sequential,
    Parallel,
}

/// What a client knows about the current exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientContext {
    pub client_id: usize,
    /// 0 for the setup exchange, then 1-based round numbers; the final local
    /// output step uses `rounds + 1`.
    pub round: usize,
    /// `derive_seed(global_seed, [client_id, round])`.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMessage<P> {
    pub client_id: usize,
    pub payload: P,
}

/// One entry of the server-side message log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEntry {
    pub round: usize,
    pub client_id: usize,
}

pub trait FederatedProtocol: Sync {
    /// Private per-client data; never leaves [`Self::client_update`] /
    /// [`Self::client_output`].
    type ClientData: Sync;
    type State: Clone + Send + Sync;
    type Payload: Send;
    type Output: Send;

    /// Client that contributes a setup message before round 1, if any.
    fn setup_client(&self) -> Option<usize> {
        None
    }

    fn client_setup(
        &self,
        ctx: &ClientContext,
        _data: &Self::ClientData,
    ) -> Result<Self::Payload, FederationError> {
        Err(FederationError::Client {
            client: ctx.client_id,
            reason: "protocol has no setup step".into(),
        })
    }

    fn init_server(
        &self,
        setup: Option<RoundMessage<Self::Payload>>,
    ) -> Result<Self::State, FederationError>;

    fn client_update(
        &self,
        ctx: &ClientContext,
        data: &Self::ClientData,
        state: &Self::State,
    ) -> Result<Self::Payload, FederationError>;

    /// Receives messages sorted by ascending client id.
    fn aggregate(
        &self,
        state: &Self::State,
        messages: Vec<RoundMessage<Self::Payload>>,
    ) -> Result<Self::State, FederationError>;

    /// Stops the round loop early once the server state is final.
    fn is_complete(&self, _state: &Self::State) -> bool {
        false
    }

    fn client_output(
        &self,
        ctx: &ClientContext,
        data: &Self::ClientData,
        state: &Self::State,
    ) -> Result<Self::Output, FederationError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolResult<S, O> {
    pub state: S,
    pub outputs: Vec<O>,
    pub log: Vec<LogEntry>,
    pub rounds_run: usize,
}

fn context(cfg: &FederationConfig, client_id: usize, round: usize) -> ClientContext {
    ClientContext {
        client_id,
        round,
        seed: derive_seed(cfg.seed, &[client_id as u64, round as u64]),
    }
}

fn map_clients<D, T, F>(clients: &[D], mode: ExecutionMode, f: F) -> Result<Vec<T>, FederationError>
where
    D: Sync,
    T: Send,
    F: Fn(usize, &D) -> Result<T, FederationError> + Sync,
{
    match mode {
        ExecutionMode::Sequential => clients.iter().enumerate().map(|(i, d)| f(i, d)).collect(),
        ExecutionMode::Parallel => clients
            .par_iter()
            .enumerate()
            .map(|(i, d)| f(i, d))
            .collect(),
    }
}

/// Runs `protocol` over `clients` (indexed by client id).
pub fn run_federation<P: FederatedProtocol>(
    clients: &[P::ClientData],
    protocol: &P,
    cfg: &FederationConfig,
    mode: ExecutionMode,
) -> Result<ProtocolResult<P::State, P::Output>, FederationError> {
    if clients.len() != cfg.n_clients {
        return Err(FederationError::ClientCount {
            expected: cfg.n_clients,
            found: clients.len(),
        });
    }
    if cfg.rounds == 0 {
        return Err(FederationError::NoRounds);
    }
    let mut log = Vec::new();

    let setup = match protocol.setup_client() {
        Some(id) => {
            let data = clients.get(id).ok_or(FederationError::ClientCount {
                expected: id + 1,
                found: clients.len(),
            })?;
            let payload = protocol.client_setup(&context(cfg, id, 0), data)?;
            log.push(LogEntry {
                round: 0,
                client_id: id,
            });
            Some(RoundMessage {
                client_id: id,
                payload,
            })
        }
        None => None,
    };
    let mut state = protocol.init_server(setup)?;

    let mut rounds_run = 0;
    for round in 1..=cfg.rounds {
        if protocol.is_complete(&state) {
            break;
        }
        let snapshot = &state;
        let messages = map_clients(clients, mode, |id, data| {
            protocol
                .client_update(&context(cfg, id, round), data, snapshot)
                .map(|payload| RoundMessage {
                    client_id: id,
                    payload,
                })
        })?;
        log.extend(messages.iter().map(|m| LogEntry {
            round,
            client_id: m.client_id,
        }));
        state = protocol.aggregate(&state, messages)?;
        rounds_run = round;
    }

    let final_state = &state;
    let outputs = map_clients(clients, mode, |id, data| {
        protocol.client_output(&context(cfg, id, cfg.rounds + 1), data, final_state)
    })?;

    Ok(ProtocolResult {
        state,
        outputs,
        log,
        rounds_run,
    })
}
