//! Experiment configuration, read from a TOML file. Every key has a
//! default, so an empty file is a valid configuration; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub fl: FlConfig,
    pub timing: TimingConfig,
    pub sweep: SweepConfig,
    pub allocator: AllocatorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            fl: FlConfig::default(),
            timing: TimingConfig::default(),
            sweep: SweepConfig::default(),
            allocator: AllocatorConfig::default(),
        }
    }
}

/// Synthetic data generation and preparation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Images generated before the majority class is down-sampled.
    pub samples: usize,
    pub height: usize,
    pub width: usize,
    pub minority_fraction: f64,
    pub signal: f64,
    pub even_phase: f64,
    /// Minority share after down-sampling the majority class.
    pub balance_ratio: f64,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    /// Label-skewed client shards from `Dirichlet(beta)`; stratified equal
    /// shards when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dirichlet_beta: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            samples: 6000,
            height: 32,
            width: 32,
            minority_fraction: 0.1444,
            signal: edgesplit_core::data::DEFAULT_SIGNAL,
            even_phase: edgesplit_core::data::DEFAULT_EVEN_PHASE,
            balance_ratio: 0.5,
            split: [0.7, 0.15, 0.15],
            dirichlet_beta: None,
        }
    }
}

/// A CNN of 3x3 convolution blocks followed by one hidden dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub channels: Vec<usize>,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { channels: vec![8, 16, 32, 64], hidden: 512, dropout: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleName {
    RoundRobin,
    Shuffled,
}

/// Settings shared by the split and federated runs so comparisons are
/// like-for-like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub cut: usize,
    pub clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: ScheduleName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            cut: 12,
            clients: 4,
            rounds: 25,
            local_epochs: 2,
            batch_size: 32,
            learning_rate: 1e-3,
            schedule: ScheduleName::RoundRobin,
            target_accuracy: None,
        }
    }
}

/// Federated-baseline specifics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlConfig {
    pub prox_mu: f64,
    pub server_lr: f64,
    pub server_beta1: f64,
    pub server_beta2: f64,
    pub server_eps: f64,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self { prox_mu: 0.01, server_lr: 1e-2, server_beta1: 0.9, server_beta2: 0.99, server_eps: 1e-3 }
    }
}

/// How simulated client seconds are derived: compute at a fixed FLOP
/// rate, uplink at the Shannon rate of an equal bandwidth share for
/// clients placed at random around the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub client_flops_per_sec: f64,
    pub radius_m: f64,
    pub power_dbm: f64,
    pub total_bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            client_flops_per_sec: 1e9,
            radius_m: 250.0,
            power_dbm: 12.0,
            total_bandwidth_hz: 20e6,
            noise_psd_dbm_hz: -174.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub cuts: Vec<usize>,
    pub client_counts: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { cuts: vec![4, 8, 12], client_counts: vec![2, 4, 6, 8, 12, 16] }
    }
}

/// The energy/latency allocation scenario and its sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocatorConfig {
    pub devices: usize,
    pub radius_m: f64,
    pub total_bandwidth_hz: f64,
    pub global_rounds: u32,
    pub local_iters: u32,
    pub dataset_size: u64,
    pub payload_bits: f64,
    pub power_min_dbm: f64,
    pub power_max_dbm: f64,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub cycles_per_sample: f64,
    pub capacitance: f64,
    pub noise_psd_dbm_hz: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Energy weights; latency gets one minus the weight.
    pub weights: Vec<f64>,
    pub power_max_dbm_sweep: Vec<f64>,
    pub freq_max_hz_sweep: Vec<f64>,
    pub bandwidth_hz_sweep: Vec<f64>,
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        Self {
            devices: 50,
            radius_m: 250.0,
            total_bandwidth_hz: 20e6,
            global_rounds: 400,
            local_iters: 10,
            dataset_size: 500,
            payload_bits: 28.1e3,
            power_min_dbm: 0.0,
            power_max_dbm: 12.0,
            freq_min_hz: 0.2e9,
            freq_max_hz: 2e9,
            cycles_per_sample: 2e4,
            capacitance: 1e-28,
            noise_psd_dbm_hz: -174.0,
            outer_tol: 1e-4,
            max_outer: 200,
            weights: vec![0.2, 0.5, 0.8],
            power_max_dbm_sweep: vec![4.0, 8.0, 12.0, 16.0, 20.0],
            freq_max_hz_sweep: vec![1.0e9, 1.5e9, 2.0e9, 2.5e9, 3.0e9],
            bandwidth_hz_sweep: vec![10e6, 15e6, 20e6, 25e6, 30e6],
        }
    }
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError(msg.into()))
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

fn ascending(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable in TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.data;
        check(d.samples >= 10, "data.samples must be at least 10")?;
        check(d.height >= 4 && d.width >= 4, "data.height and data.width must be at least 4")?;
        check(d.minority_fraction > 0.0 && d.minority_fraction <= 0.5, "data.minority_fraction must be in (0, 0.5]")?;
        check(d.signal >= 0.0 && d.signal.is_finite(), "data.signal must be non-negative")?;
        check((0.0..=1.0).contains(&d.even_phase), "data.even_phase must be in [0, 1]")?;
        check(d.balance_ratio > 0.0 && d.balance_ratio <= 0.5, "data.balance_ratio must be in (0, 0.5]")?;
        check(
            d.split.iter().all(|&f| f > 0.0) && (d.split.iter().sum::<f64>() - 1.0).abs() < 1e-9,
            "data.split fractions must be positive and sum to 1",
        )?;
        if let Some(beta) = d.dirichlet_beta {
            check(positive(beta), "data.dirichlet_beta must be positive")?;
        }

        let m = &self.model;
        check(!m.channels.is_empty() && m.channels.iter().all(|&c| c > 0), "model.channels must be non-empty and positive")?;
        check(m.hidden > 0, "model.hidden must be positive")?;
        check((0.0..1.0).contains(&m.dropout), "model.dropout must be in [0, 1)")?;
        let layers = 4 * m.channels.len() + 5;

        let t = &self.training;
        check(t.cut <= layers, format!("training.cut must be at most {layers} for this model"))?;
        check(t.clients >= 1, "training.clients must be at least 1")?;
        check(t.batch_size >= 1, "training.batch_size must be at least 1")?;
        check(positive(t.learning_rate), "training.learning_rate must be positive")?;
        if let Some(a) = t.target_accuracy {
            check((0.0..=1.0).contains(&a), "training.target_accuracy must be in [0, 1]")?;
        }

        let f = &self.fl;
        check(f.prox_mu >= 0.0 && f.prox_mu.is_finite(), "fl.prox_mu must be non-negative")?;
        check(positive(f.server_lr) && positive(f.server_eps), "fl.server_lr and fl.server_eps must be positive")?;
        check(
            (0.0..1.0).contains(&f.server_beta1) && (0.0..1.0).contains(&f.server_beta2),
            "fl.server_beta1 and fl.server_beta2 must be in [0, 1)",
        )?;

        let tm = &self.timing;
        check(positive(tm.client_flops_per_sec), "timing.client_flops_per_sec must be positive")?;
        check(positive(tm.radius_m) && positive(tm.total_bandwidth_hz), "timing radius and bandwidth must be positive")?;
        check(tm.power_dbm.is_finite() && tm.noise_psd_dbm_hz.is_finite(), "timing powers must be finite")?;

        let s = &self.sweep;
        check(s.cuts.iter().all(|&c| c <= layers), format!("sweep.cuts must be at most {layers}"))?;
        check(s.client_counts.iter().all(|&c| c >= 1), "sweep.client_counts must be at least 1")?;

        let a = &self.allocator;
        check(a.devices >= 1, "allocator.devices must be at least 1")?;
        check(positive(a.radius_m) && positive(a.total_bandwidth_hz), "allocator radius and bandwidth must be positive")?;
        check(a.global_rounds >= 1 && a.local_iters >= 1 && a.dataset_size >= 1, "allocator rounds, iterations and dataset size must be at least 1")?;
        check(positive(a.payload_bits) && positive(a.cycles_per_sample) && positive(a.capacitance), "allocator payload, cycles and capacitance must be positive")?;
        check(a.power_min_dbm <= a.power_max_dbm, "allocator.power_min_dbm must not exceed power_max_dbm")?;
        check(positive(a.freq_min_hz) && a.freq_min_hz <= a.freq_max_hz, "allocator frequency bounds must satisfy 0 < min <= max")?;
        check(positive(a.outer_tol) && a.max_outer >= 1, "allocator.outer_tol and max_outer must be positive")?;
        check(!a.weights.is_empty() && a.weights.iter().all(|w| (0.0..=1.0).contains(w)), "allocator.weights must be in [0, 1]")?;
        for (name, sweep) in [
            ("power_max_dbm_sweep", &a.power_max_dbm_sweep),
            ("freq_max_hz_sweep", &a.freq_max_hz_sweep),
            ("bandwidth_hz_sweep", &a.bandwidth_hz_sweep),
        ] {
            check(ascending(sweep) && sweep.iter().all(|v| v.is_finite()), format!("allocator.{name} must be strictly ascending"))?;
        }
        check(a.power_max_dbm_sweep.iter().all(|&p| p >= a.power_min_dbm), "allocator.power_max_dbm_sweep must stay above power_min_dbm")?;
        check(a.freq_max_hz_sweep.iter().all(|&f| f >= a.freq_min_hz), "allocator.freq_max_hz_sweep must stay above freq_min_hz")?;
        check(a.bandwidth_hz_sweep.iter().all(|&b| positive(b)), "allocator.bandwidth_hz_sweep must be positive")?;
        Ok(())
    }
}
