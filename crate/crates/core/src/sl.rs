//! Sequential split learning with per-round client synchronisation.
//!
//! The network is cut after layer `cut`. For every local minibatch a client
//! runs the front layers, ships the cut activations and labels to the
//! server ([`SmashedBatch`]), the server finishes the forward pass,
//! computes the loss, updates its layers and returns the gradient at the
//! cut ([`CutGradients`]), and the client back-propagates and updates its
//! own layers. Clients train one after another against the shared server
//! model; once every client has finished the round's local epochs, the
//! server averages the client-side models weighted by shard size and
//! broadcasts the result.
//!
//! Payloads are accounted at [`WIRE_BYTES_PER_ELEMENT`] bytes per element.
//! Simulated client time is FLOP-derived compute time plus uplink latency;
//! server compute is tracked separately and does not count towards client
//! time.

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::nn::{backward, cross_entropy, forward, model_flops, FlopCount, Mode, ModelSpec, Optimizer, OptimizerKind, Params, Trace};
use crate::rng::stream;
use crate::tensor::Tensor;
use crate::train::{batch_plan, data_weights, dropout_mode, evaluate, reached, ClientCounters, Evaluation, RoundMetrics, TimingModel, WIRE_BYTES_PER_ELEMENT};

/// Order in which clients take their turn within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Client-id order.
    #[default]
    RoundRobin,
    /// A fresh seeded permutation every round.
    Shuffled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlConfig {
    pub cut: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub schedule: Schedule,
    pub timing: TimingModel,
    /// Stop early once validation accuracy reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for SlConfig {
    fn default() -> Self {
        Self {
            cut: 12,
            rounds: 25,
            local_epochs: 2,
            batch_size: 32,
            optimizer: OptimizerKind::default(),
            seed: 0,
            schedule: Schedule::RoundRobin,
            timing: TimingModel::default(),
            target_accuracy: None,
        }
    }
}

/// Cut-layer activations and labels sent from a client to the server.
#[derive(Debug, Clone, PartialEq)]
pub struct SmashedBatch {
    pub client_id: usize,
    pub round: usize,
    pub batch_index: usize,
    pub activations: Tensor,
    pub labels: Vec<u8>,
    pub payload_bytes: u64,
}

impl SmashedBatch {
    pub fn new(client_id: usize, round: usize, batch_index: usize, activations: Tensor, labels: Vec<u8>) -> Self {
        let payload_bytes = (activations.len() + labels.len()) as u64 * WIRE_BYTES_PER_ELEMENT;
        Self { client_id, round, batch_index, activations, labels, payload_bytes }
    }
}

/// Loss gradient with respect to the cut activations, sent back to the
/// client.
#[derive(Debug, Clone, PartialEq)]
pub struct CutGradients {
    pub client_id: usize,
    pub round: usize,
    pub batch_index: usize,
    pub gradient: Tensor,
    pub payload_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    id: usize,
    params: Params,
    optimizer: Optimizer,
    data: Dataset,
    counters: ClientCounters,
}

impl ClientState {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn counters(&self) -> ClientCounters {
        self.counters
    }
}

#[derive(Debug, Clone)]
pub struct ServerState {
    params: Params,
    optimizer: Optimizer,
    global_client: Params,
    round: usize,
    bytes_received: u64,
    flops: u64,
}

impl ServerState {
    pub fn params(&self) -> &Params {
        &self.params
    }

    /// The broadcast client-side model.
    pub fn global_client(&self) -> &Params {
        &self.global_client
    }

    /// Completed rounds.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn bytes_received(&self) -> u64 {
        self.bytes_received
    }

    pub fn flops(&self) -> u64 {
        self.flops
    }
}

/// A split-learning deployment: the split model, the clients and the server.
#[derive(Debug, Clone)]
pub struct SlSession {
    spec: ModelSpec,
    client_spec: ModelSpec,
    server_spec: ModelSpec,
    client_flops: FlopCount,
    server_flops: FlopCount,
    cfg: SlConfig,
    clients: Vec<ClientState>,
    server: ServerState,
}

impl SlSession {
    /// Starts from `Params::init(spec, cfg.seed)`.
    pub fn new(spec: &ModelSpec, shards: Vec<Dataset>, cfg: SlConfig) -> Result<Self> {
        let params = Params::init(spec, cfg.seed);
        Self::with_params(spec, &params, shards, cfg)
    }

    pub fn with_params(spec: &ModelSpec, params: &Params, shards: Vec<Dataset>, cfg: SlConfig) -> Result<Self> {
        if shards.is_empty() {
            return Err(CoreError::domain("split learning needs at least one client"));
        }
        if shards.iter().any(Dataset::is_empty) {
            return Err(CoreError::domain("every client needs a non-empty shard"));
        }
        if cfg.batch_size == 0 {
            return Err(CoreError::domain("batch size must be positive"));
        }
        if params.count() != spec.param_count() || params.layers().len() != spec.len() {
            return Err(CoreError::domain("parameters do not match the model"));
        }
        cfg.timing.validate()?;
        let (client_spec, server_spec) = spec.split(cfg.cut)?;
        let (client_params, server_params) = params.split(cfg.cut)?;
        let clients = shards
            .into_iter()
            .enumerate()
            .map(|(id, data)| ClientState {
                id,
                optimizer: Optimizer::new(cfg.optimizer, &client_params),
                params: client_params.clone(),
                data,
                counters: ClientCounters::default(),
            })
            .collect();
        let server = ServerState {
            optimizer: Optimizer::new(cfg.optimizer, &server_params),
            params: server_params,
            global_client: client_params,
            round: 0,
            bytes_received: 0,
            flops: 0,
        };
        Ok(Self {
            spec: spec.clone(),
            client_flops: model_flops(&client_spec),
            server_flops: model_flops(&server_spec),
            client_spec,
            server_spec,
            cfg,
            clients,
            server,
        })
    }

    pub fn config(&self) -> &SlConfig {
        &self.cfg
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn client_spec(&self) -> &ModelSpec {
        &self.client_spec
    }

    pub fn server_spec(&self) -> &ModelSpec {
        &self.server_spec
    }

    /// Per-sample forward and backward FLOPs on the client side.
    pub fn client_flops_per_sample(&self) -> FlopCount {
        self.client_flops
    }

    /// Per-sample forward and backward FLOPs on the server side.
    pub fn server_flops_per_sample(&self) -> FlopCount {
        self.server_flops
    }

    /// The broadcast client model joined with the server model.
    pub fn global_params(&self) -> Params {
        self.server.global_client.concat(&self.server.params)
    }

    pub fn counters(&self) -> Vec<ClientCounters> {
        self.clients.iter().map(|c| c.counters).collect()
    }

    pub fn evaluate(&self, ds: &Dataset) -> Result<Evaluation> {
        evaluate(&self.spec, &self.global_params(), ds)
    }

    /// Client order for `round` (0-based).
    pub fn schedule_order(&self, round: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.clients.len()).collect();
        if self.cfg.schedule == Schedule::Shuffled {
            use rand::seq::SliceRandom;
            order.shuffle(&mut stream(&[self.cfg.seed, 0x5C4E, round as u64]));
        }
        order
    }

    /// Server half of one training step: finish the forward pass, take the
    /// loss, update the server layers and return the cut gradient.
    pub fn server_step(&mut self, batch: &SmashedBatch, mode: Mode) -> Result<(f64, CutGradients)> {
        let protocol = |reason: String| CoreError::Protocol { client: batch.client_id, batch: batch.batch_index, reason };
        let shape = batch.activations.shape();
        if shape.len() != self.server_spec.input_shape().len() + 1 || shape[1..] != *self.server_spec.input_shape() {
            return Err(protocol(format!(
                "smashed activations have shape {:?}, server expects [batch, {:?}]",
                shape,
                self.server_spec.input_shape()
            )));
        }
        if batch.labels.len() != shape[0] {
            return Err(protocol(format!("{} labels for {} samples", batch.labels.len(), shape[0])));
        }
        self.server.bytes_received += batch.payload_bytes;
        let (trace, logits) = forward(&self.server_spec, &self.server.params, &batch.activations, mode)?;
        let (loss, dlogits) = cross_entropy(&logits, &batch.labels)?;
        let (grads, dsmashed) = backward(&self.server_spec, &self.server.params, &trace, &dlogits)?;
        self.server.optimizer.step(&mut self.server.params, &grads)?;
        self.server.flops += self.server_flops.total() * shape[0] as u64;
        let payload_bytes = dsmashed.len() as u64 * WIRE_BYTES_PER_ELEMENT;
        Ok((
            loss,
            CutGradients {
                client_id: batch.client_id,
                round: batch.round,
                batch_index: batch.batch_index,
                gradient: dsmashed,
                payload_bytes,
            },
        ))
    }

    fn client_forward(&self, u: usize, round: usize, batch_index: usize, idx: &[usize]) -> Result<(Trace, SmashedBatch)> {
        let client = &self.clients[u];
        let x = client.data.images.select_rows(idx);
        let labels = idx.iter().map(|&i| client.data.labels[i]).collect();
        let mode = dropout_mode(self.cfg.seed, u, round, batch_index);
        let (trace, smashed) = forward(&self.client_spec, &client.params, &x, mode)?;
        Ok((trace, SmashedBatch::new(u, round, batch_index, smashed, labels)))
    }

    fn client_backward(&mut self, u: usize, trace: &Trace, grads: &CutGradients) -> Result<()> {
        let client = &mut self.clients[u];
        if grads.client_id != u {
            return Err(CoreError::Protocol { client: u, batch: grads.batch_index, reason: format!("gradient addressed to client {}", grads.client_id) });
        }
        let (g, _) = backward(&self.client_spec, &client.params, trace, &grads.gradient)?;
        client.optimizer.step(&mut client.params, &g)
    }

    /// Trains every client for the configured local epochs, aggregates the
    /// client-side models and broadcasts them. Returns the mean minibatch
    /// loss of the round.
    pub fn run_round(&mut self) -> Result<f64> {
        let loss = self.train_clients()?;
        self.aggregate_and_broadcast()?;
        Ok(loss)
    }

    /// The local phase of a round: every client, in schedule order, trains
    /// its local epochs against the shared server model. Returns the mean
    /// minibatch loss.
    pub fn train_clients(&mut self) -> Result<f64> {
        let round = self.server.round;
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for u in self.schedule_order(round) {
            let n = self.clients[u].data.len();
            let mut batch_index = 0;
            for epoch in 0..self.cfg.local_epochs {
                for idx in batch_plan(n, self.cfg.batch_size, self.cfg.seed, u, round, epoch) {
                    let (trace, smashed) = self.client_forward(u, round, batch_index, &idx)?;
                    let timing = &self.cfg.timing;
                    let counters = &mut self.clients[u].counters;
                    counters.compute(timing, self.client_flops.forward * idx.len() as u64);
                    counters.upload(timing, u, smashed.payload_bytes)?;

                    let mode = dropout_mode(self.cfg.seed, u, round, batch_index);
                    let (loss, grads) = self.server_step(&smashed, mode)?;
                    self.clients[u].counters.download(grads.payload_bytes);

                    self.client_backward(u, &trace, &grads)?;
                    self.clients[u].counters.compute(&self.cfg.timing, self.client_flops.backward * idx.len() as u64);
                    loss_sum += loss;
                    batches += 1;
                    batch_index += 1;
                }
            }
        }
        Ok(if batches == 0 { 0.0 } else { loss_sum / batches as f64 })
    }

    /// Closes the round: client models travel up, the server averages them
    /// with weights `D_u / sum_j D_j` and broadcasts the result. Both
    /// transfers are accounted.
    pub fn aggregate_and_broadcast(&mut self) -> Result<()> {
        let sizes: Vec<usize> = self.clients.iter().map(|c| c.data.len()).collect();
        let weights = data_weights(&sizes)?;
        let model_bytes = self.server.global_client.count() as u64 * WIRE_BYTES_PER_ELEMENT;
        if model_bytes > 0 {
            for c in &mut self.clients {
                c.counters.upload(&self.cfg.timing, c.id, model_bytes)?;
                self.server.bytes_received += model_bytes;
            }
        }
        let parts: Vec<(&Params, f64)> = self.clients.iter().map(|c| &c.params).zip(weights).collect();
        let global = Params::weighted_sum(&parts)?;
        for c in &mut self.clients {
            c.params = global.clone();
            c.counters.download(model_bytes);
        }
        self.server.global_client = global;
        self.server.round += 1;
        Ok(())
    }
}

/// Runs `cfg.rounds` rounds, evaluating on `val` after each, and returns the
/// per-round record with the final session.
pub fn run_training(spec: &ModelSpec, shards: Vec<Dataset>, val: &Dataset, cfg: SlConfig) -> Result<(Vec<RoundMetrics>, SlSession)> {
    let mut session = SlSession::new(spec, shards, cfg)?;
    let mut rows = Vec::with_capacity(session.cfg.rounds);
    for round in 1..=session.cfg.rounds {
        let loss = session.run_round()?;
        let eval = session.evaluate(val)?;
        let row = RoundMetrics::new(round, loss, &eval, &session.counters());
        rows.push(row);
        if reached(session.cfg.target_accuracy, &row) {
            break;
        }
    }
    Ok((rows, session))
}
