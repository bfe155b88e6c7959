//! Federated-learning baselines on the same model, shards and accounting
//! rules as the split-learning engine.
//!
//! Each round every client starts from the global model, trains the full
//! network for the configured local epochs, and uploads its parameters.
//! The server combines them with weights `D_u / sum_j D_j`:
//!
//! * FedAvg: the weighted mean becomes the new global model.
//! * FedProx: as FedAvg, but local training adds `mu (w - w_global)` to
//!   every gradient (the proximal term `mu/2 |w - w_global|^2`).
//! * FedOpt: the server treats `w_global - mean` as a gradient and takes
//!   an Adam step on the global model.
//!
//! Every client downloads and uploads the full model each round, so the
//! per-round payload is `2 p` elements per client.

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::nn::{backward, cross_entropy, forward, model_flops, ModelSpec, Optimizer, OptimizerKind, Params};
use crate::train::{batch_plan, data_weights, dropout_mode, evaluate, reached, ClientCounters, Evaluation, RoundMetrics, TimingModel, WIRE_BYTES_PER_ELEMENT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FedVariant {
    FedAvg,
    FedProx { mu: f64 },
    FedOpt { server_lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl FedVariant {
    pub fn fedprox() -> Self {
        FedVariant::FedProx { mu: 0.01 }
    }

    pub fn fedopt() -> Self {
        FedVariant::FedOpt { server_lr: 1e-2, beta1: 0.9, beta2: 0.99, eps: 1e-3 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FedVariant::FedAvg => "fedavg",
            FedVariant::FedProx { .. } => "fedprox",
            FedVariant::FedOpt { .. } => "fedopt",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            FedVariant::FedAvg => Ok(()),
            FedVariant::FedProx { mu } if mu >= 0.0 && mu.is_finite() => Ok(()),
            FedVariant::FedProx { mu } => Err(CoreError::domain(format!("proximal weight must be non-negative, got {mu}"))),
            FedVariant::FedOpt { server_lr, beta1, beta2, eps } => {
                if server_lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0 {
                    Ok(())
                } else {
                    Err(CoreError::domain("server optimiser needs lr > 0, betas in [0, 1) and eps > 0"))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub variant: FedVariant,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Local optimiser; Adam by default, plain SGD for reference checks.
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub timing: TimingModel,
    pub target_accuracy: Option<f64>,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            variant: FedVariant::FedAvg,
            rounds: 25,
            local_epochs: 2,
            batch_size: 32,
            optimizer: OptimizerKind::default(),
            seed: 0,
            timing: TimingModel::default(),
            target_accuracy: None,
        }
    }
}

/// A federated client: its shard, persistent local optimiser state and
/// accounting.
#[derive(Debug, Clone)]
pub struct FlClient {
    id: usize,
    data: Dataset,
    optimizer: Option<Optimizer>,
    counters: ClientCounters,
}

impl FlClient {
    pub fn new(id: usize, data: Dataset) -> Self {
        Self { id, data, optimizer: None, counters: ClientCounters::default() }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn counters(&self) -> ClientCounters {
        self.counters
    }
}

#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: Params,
    pub samples: usize,
    /// Download plus upload of the full model.
    pub payload_bytes: u64,
    /// Mean minibatch loss, `None` when no batch ran.
    pub loss: Option<f64>,
}

/// Local training from `global` for `cfg.local_epochs` epochs of round
/// `round` (0-based). Accounting is charged to the client.
pub fn local_train(spec: &ModelSpec, client: &mut FlClient, global: &Params, cfg: &FedConfig, round: usize) -> Result<ClientUpdate> {
    if client.data.is_empty() {
        return Err(CoreError::domain(format!("client {} has an empty shard", client.id)));
    }
    let model_bytes = global.count() as u64 * WIRE_BYTES_PER_ELEMENT;
    client.counters.download(model_bytes);
    let mu = match cfg.variant {
        FedVariant::FedProx { mu } => mu,
        _ => 0.0,
    };
    let per_sample = model_flops(spec).total();
    let mut params = global.clone();
    let optimizer = client.optimizer.get_or_insert_with(|| Optimizer::new(cfg.optimizer, global));
    let (mut sum, mut count) = (0.0, 0usize);
    for epoch in 0..cfg.local_epochs {
        for idx in batch_plan(client.data.len(), cfg.batch_size, cfg.seed, client.id, round, epoch) {
            let x = client.data.images.select_rows(&idx);
            let labels: Vec<u8> = idx.iter().map(|&i| client.data.labels[i]).collect();
            let (trace, logits) = forward(spec, &params, &x, dropout_mode(cfg.seed, client.id, round, count))?;
            let (loss, dlogits) = cross_entropy(&logits, &labels)?;
            let (mut grads, _) = backward(spec, &params, &trace, &dlogits)?;
            if mu != 0.0 {
                for ((g, w), w0) in grads.slices_mut().zip(params.slices()).zip(global.slices()) {
                    for i in 0..g.len() {
                        g[i] += mu * (w[i] - w0[i]);
                    }
                }
            }
            optimizer.step(&mut params, &grads)?;
            client.counters.compute(&cfg.timing, per_sample * idx.len() as u64);
            sum += loss;
            count += 1;
        }
    }
    client.counters.upload(&cfg.timing, client.id, model_bytes)?;
    Ok(ClientUpdate {
        client_id: client.id,
        params,
        samples: client.data.len(),
        payload_bytes: 2 * model_bytes,
        loss: (count > 0).then(|| sum / count as f64),
    })
}

/// The FedOpt server optimiser; unused by the other variants.
#[derive(Debug, Clone)]
pub struct ServerOptimizer(Option<Optimizer>);

impl ServerOptimizer {
    pub fn new(variant: FedVariant, global: &Params) -> Self {
        match variant {
            FedVariant::FedOpt { server_lr, beta1, beta2, eps } => {
                Self(Some(Optimizer::new(OptimizerKind::Adam { lr: server_lr, beta1, beta2, eps }, global)))
            }
            _ => Self(None),
        }
    }
}

/// Weighted mean of the client parameters, with weights `D_u / sum_j D_j`.
pub fn weighted_mean(updates: &[ClientUpdate]) -> Result<Params> {
    if updates.is_empty() {
        return Err(CoreError::domain("aggregation needs at least one update"));
    }
    let sizes: Vec<usize> = updates.iter().map(|u| u.samples).collect();
    let weights = data_weights(&sizes)?;
    let parts: Vec<(&Params, f64)> = updates.iter().map(|u| &u.params).zip(weights).collect();
    Params::weighted_sum(&parts)
}

/// New global model from the round's updates.
pub fn aggregate(updates: &[ClientUpdate], global: &Params, server: &mut ServerOptimizer) -> Result<Params> {
    let mean = weighted_mean(updates)?;
    let Some(optimizer) = server.0.as_mut() else {
        return Ok(mean);
    };
    let mut pseudo_grad = global.clone();
    for (g, m) in pseudo_grad.slices_mut().zip(mean.slices()) {
        for (gi, mi) in g.iter_mut().zip(m) {
            *gi -= mi;
        }
    }
    let mut next = global.clone();
    optimizer.step(&mut next, &pseudo_grad)?;
    Ok(next)
}

/// A federated deployment: global model, clients and server optimiser.
#[derive(Debug, Clone)]
pub struct FlSession {
    spec: ModelSpec,
    cfg: FedConfig,
    global: Params,
    clients: Vec<FlClient>,
    server: ServerOptimizer,
    round: usize,
    skipped: Vec<(usize, usize)>,
}

impl FlSession {
    pub fn new(spec: &ModelSpec, shards: Vec<Dataset>, cfg: FedConfig) -> Result<Self> {
        let params = Params::init(spec, cfg.seed);
        Self::with_params(spec, &params, shards, cfg)
    }

    pub fn with_params(spec: &ModelSpec, params: &Params, shards: Vec<Dataset>, cfg: FedConfig) -> Result<Self> {
        if shards.is_empty() {
            return Err(CoreError::domain("federated learning needs at least one client"));
        }
        if cfg.batch_size == 0 {
            return Err(CoreError::domain("batch size must be positive"));
        }
        if params.count() != spec.param_count() || params.layers().len() != spec.len() {
            return Err(CoreError::domain("parameters do not match the model"));
        }
        cfg.variant.validate()?;
        cfg.timing.validate()?;
        Ok(Self {
            spec: spec.clone(),
            server: ServerOptimizer::new(cfg.variant, params),
            global: params.clone(),
            clients: shards.into_iter().enumerate().map(|(id, d)| FlClient::new(id, d)).collect(),
            cfg,
            round: 0,
            skipped: Vec::new(),
        })
    }

    pub fn global_params(&self) -> &Params {
        &self.global
    }

    pub fn clients(&self) -> &[FlClient] {
        &self.clients
    }

    pub fn counters(&self) -> Vec<ClientCounters> {
        self.clients.iter().map(|c| c.counters).collect()
    }

    /// `(round, client)` pairs skipped because the client's shard was empty.
    pub fn skipped(&self) -> &[(usize, usize)] {
        &self.skipped
    }

    pub fn evaluate(&self, ds: &Dataset) -> Result<Evaluation> {
        evaluate(&self.spec, &self.global, ds)
    }

    /// One round; clients with empty shards are skipped. Returns the mean
    /// minibatch loss over the participating clients, weighted by batch
    /// count.
    pub fn run_round(&mut self) -> Result<f64> {
        let mut updates = Vec::with_capacity(self.clients.len());
        let (mut sum, mut count) = (0.0, 0usize);
        for client in &mut self.clients {
            if client.data.is_empty() {
                self.skipped.push((self.round, client.id));
                continue;
            }
            let update = local_train(&self.spec, client, &self.global, &self.cfg, self.round)?;
            if let Some(l) = update.loss {
                let batches = self.cfg.local_epochs * client.data.len().div_ceil(self.cfg.batch_size);
                sum += l * batches as f64;
                count += batches;
            }
            updates.push(update);
        }
        self.global = aggregate(&updates, &self.global, &mut self.server)?;
        self.round += 1;
        Ok(if count == 0 { 0.0 } else { sum / count as f64 })
    }
}

/// Runs `cfg.rounds` rounds, evaluating on `val` after each.
pub fn run_fl_training(spec: &ModelSpec, shards: Vec<Dataset>, val: &Dataset, cfg: FedConfig) -> Result<(Vec<RoundMetrics>, FlSession)> {
    let mut session = FlSession::new(spec, shards, cfg)?;
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
