//! Turns a configuration into the concrete inputs of a run: the prepared
//! dataset splits, client shards, model and timing model.

use anyhow::{Context, Result};
use edgesplit_core::data::{downsample_majority, generate_with, normalize, shard, stratified_split, Dataset, ShardMode, SynthParams};
use edgesplit_core::fl::{FedConfig, FedVariant};
use edgesplit_core::nn::{ModelSpec, OptimizerKind};
use edgesplit_core::rng::mix;
use edgesplit_core::sl::{Schedule, SlConfig};
use edgesplit_core::train::TimingModel;
use edgesplit_radio::wireless::{dbm_to_watts, generate_topology, uplink_rate};

use crate::config::{ExperimentConfig, ScheduleName};

/// Stream tags so that each stage draws from its own seed.
const TAG_TOPOLOGY: u64 = 0x70B0;

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Generates, balances, splits and normalizes the synthetic dataset.
/// Normalization statistics come from the training split only.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Splits> {
    let d = &cfg.data;
    let raw = generate_with(&SynthParams {
        n: d.samples,
        height: d.height,
        width: d.width,
        minority_fraction: d.minority_fraction,
        signal: d.signal,
        even_phase: d.even_phase,
        seed: cfg.seed,
    })
    .context("generating synthetic data")?;
    let balanced = downsample_majority(&raw, d.balance_ratio, cfg.seed).context("balancing classes")?;
    let (train, val, test) = stratified_split(&balanced, d.split, cfg.seed).context("splitting data")?;
    let (train, mut rest, _) = normalize(&train, &[&val, &test]).context("normalizing data")?;
    let test = rest.pop().expect("two held-out splits");
    let val = rest.pop().expect("two held-out splits");
    Ok(Splits { train, val, test })
}

pub fn shard_mode(cfg: &ExperimentConfig) -> ShardMode {
    match cfg.data.dirichlet_beta {
        Some(beta) => ShardMode::Dirichlet { beta },
        None => ShardMode::Stratified,
    }
}

pub fn client_shards(cfg: &ExperimentConfig, train: &Dataset, clients: usize) -> Result<Vec<Dataset>> {
    shard(train, clients, shard_mode(cfg), cfg.seed).with_context(|| format!("sharding training data over {clients} clients"))
}

pub fn model(cfg: &ExperimentConfig) -> Result<ModelSpec> {
    let m = &cfg.model;
    ModelSpec::cnn([1, cfg.data.height, cfg.data.width], &m.channels, m.hidden, 2, m.dropout).context("building the model")
}

/// Client compute rate plus per-client uplink rates: clients are placed at
/// random in a disk around the server and share the bandwidth equally at
/// a fixed transmit power.
pub fn timing(cfg: &ExperimentConfig, clients: usize) -> Result<TimingModel> {
    let t = &cfg.timing;
    let topo = generate_topology(clients, t.radius_m, mix(&[cfg.seed, TAG_TOPOLOGY, clients as u64]));
    let share = t.total_bandwidth_hz / clients as f64;
    let power = dbm_to_watts(t.power_dbm);
    let psd = dbm_to_watts(t.noise_psd_dbm_hz);
    let uplink_rates = topo
        .gains
        .iter()
        .map(|&g| uplink_rate(share, power, g, psd))
        .collect::<Result<Vec<_>, _>>()
        .context("computing uplink rates")?;
    Ok(TimingModel { client_flops_per_sec: t.client_flops_per_sec, uplink_rates })
}

fn optimizer(cfg: &ExperimentConfig) -> OptimizerKind {
    OptimizerKind::adam(cfg.training.learning_rate)
}

pub fn sl_config(cfg: &ExperimentConfig, cut: usize, clients: usize) -> Result<SlConfig> {
    let t = &cfg.training;
    Ok(SlConfig {
        cut,
        rounds: t.rounds,
        local_epochs: t.local_epochs,
        batch_size: t.batch_size,
        optimizer: optimizer(cfg),
        seed: cfg.seed,
        schedule: match t.schedule {
            ScheduleName::RoundRobin => Schedule::RoundRobin,
            ScheduleName::Shuffled => Schedule::Shuffled,
        },
        timing: timing(cfg, clients)?,
        target_accuracy: t.target_accuracy,
    })
}

/// The three federated baselines in output order.
pub fn fed_variants(cfg: &ExperimentConfig) -> [FedVariant; 3] {
    let f = &cfg.fl;
    [
        FedVariant::FedAvg,
        FedVariant::FedProx { mu: f.prox_mu },
        FedVariant::FedOpt { server_lr: f.server_lr, beta1: f.server_beta1, beta2: f.server_beta2, eps: f.server_eps },
    ]
}

pub fn fed_config(cfg: &ExperimentConfig, variant: FedVariant, clients: usize) -> Result<FedConfig> {
    let t = &cfg.training;
    Ok(FedConfig {
        variant,
        rounds: t.rounds,
        local_epochs: t.local_epochs,
        batch_size: t.batch_size,
        optimizer: optimizer(cfg),
        seed: cfg.seed,
        timing: timing(cfg, clients)?,
        target_accuracy: t.target_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.data.samples = 400;
        cfg
    }

    #[test]
    fn splits_partition_the_balanced_data() {
        let cfg = small();
        let s = prepare_data(&cfg).unwrap();
        let total = s.train.len() + s.val.len() + s.test.len();
        let positives = s.train.positives() + s.val.positives() + s.test.positives();
        assert_eq!(positives, 58);
        assert_eq!(total, 116);
        let shards = client_shards(&cfg, &s.train, 4).unwrap();
        assert_eq!(shards.iter().map(Dataset::len).sum::<usize>(), s.train.len());
    }

    #[test]
    fn default_model_is_the_desk_cnn() {
        assert_eq!(model(&ExperimentConfig::default()).unwrap(), ModelSpec::desk_cnn());
    }

    #[test]
    fn timing_rates_are_positive_and_seeded() {
        let cfg = ExperimentConfig::default();
        let a = timing(&cfg, 4).unwrap();
        assert_eq!(a.uplink_rates.len(), 4);
        assert!(a.uplink_rates.iter().all(|&r| r > 0.0 && r.is_finite()));
        assert_eq!(a, timing(&cfg, 4).unwrap());
    }
}
