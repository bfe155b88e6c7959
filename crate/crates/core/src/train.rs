//! Pieces shared by the centralised, split and federated trainers: batch
//! schedules, dropout keys, evaluation, simulated timing and the per-round
//! metrics record.
//!
//! Every trainer derives batch orders and dropout masks from the same keys
//! `(seed, client, round, epoch/batch)`, which is what makes a one-client
//! split or federated run reproduce centralised training exactly.

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::metrics::{classification_metrics, Classification};
use crate::nn::{argmax_rows, cross_entropy, infer, Mode, ModelSpec, Params};
use crate::rng::{mix, stream};

/// Bytes per transmitted element. Training runs in `f64`, but payloads are
/// accounted as 32-bit floats on the wire.
pub const WIRE_BYTES_PER_ELEMENT: u64 = 4;

/// Minibatches (sample indices) for one local epoch of `client` in `round`.
pub fn batch_plan(n: usize, batch_size: usize, seed: u64, client: usize, round: usize, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(&[seed, 0xBA7C, client as u64, round as u64, epoch as u64]));
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Dropout mode for the `batch`-th minibatch (counted across the round's
/// epochs) of `client` in `round`.
pub fn dropout_mode(seed: u64, client: usize, round: usize, batch: usize) -> Mode {
    Mode::Train { seed: mix(&[seed, 0xD409, client as u64]), step: mix(&[round as u64, batch as u64]) }
}

/// Loss and classification quality of a model on a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub metrics: Classification,
}

/// Evaluation-mode pass over `ds` in chunks of 256 samples.
pub fn evaluate(spec: &ModelSpec, params: &Params, ds: &Dataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(CoreError::domain("cannot evaluate on an empty dataset"));
    }
    let mut preds = Vec::with_capacity(ds.len());
    let mut loss_sum = 0.0;
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(256) {
        let x = ds.images.select_rows(chunk);
        let labels: Vec<u8> = chunk.iter().map(|&i| ds.labels[i]).collect();
        let logits = infer(spec, params, &x)?;
        let (loss, _) = cross_entropy(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        preds.extend(argmax_rows(&logits));
    }
    Ok(Evaluation { loss: loss_sum / ds.len() as f64, metrics: classification_metrics(&preds, &ds.labels)? })
}

/// Converts work and payloads into simulated client seconds.
///
/// Compute time is FLOPs divided by the client's sustained throughput;
/// uplink time is payload bits divided by the client's uplink rate.
/// Downlink transfers are treated as free.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingModel {
    pub client_flops_per_sec: f64,
    /// Uplink rate (bits/s) per client; client `u` uses entry
    /// `u % rates.len()`.
    pub uplink_rates: Vec<f64>,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self { client_flops_per_sec: 1e9, uplink_rates: vec![1e6] }
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.client_flops_per_sec > 0.0 && self.client_flops_per_sec.is_finite()) {
            return Err(CoreError::domain("client throughput must be positive"));
        }
        if self.uplink_rates.is_empty() || self.uplink_rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(CoreError::domain("uplink rates must be positive"));
        }
        Ok(())
    }

    pub fn rate(&self, client: usize) -> f64 {
        self.uplink_rates[client % self.uplink_rates.len()]
    }

    pub fn compute_seconds(&self, flops: u64) -> f64 {
        flops as f64 / self.client_flops_per_sec
    }
}

/// Seconds to push `payload_bytes` over a `rate` bits/s link.
pub fn latency_of(payload_bytes: u64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(CoreError::domain(format!("uplink rate must be positive, got {rate}")));
    }
    Ok(payload_bytes as f64 * 8.0 / rate)
}

/// Cumulative per-client accounting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClientCounters {
    pub seconds: f64,
    pub flops: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

impl ClientCounters {
    pub(crate) fn compute(&mut self, timing: &TimingModel, flops: u64) {
        self.flops += flops;
        self.seconds += timing.compute_seconds(flops);
    }

    pub(crate) fn upload(&mut self, timing: &TimingModel, client: usize, bytes: u64) -> Result<()> {
        self.bytes_up += bytes;
        self.seconds += latency_of(bytes, timing.rate(client))?;
        Ok(())
    }

    pub(crate) fn download(&mut self, bytes: u64) {
        self.bytes_down += bytes;
    }
}

/// One row of the per-round training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics {
    /// 1-based round number.
    pub round: usize,
    /// Mean training loss over the round's minibatches.
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean cumulative simulated seconds per client.
    pub avg_client_sec: f64,
    /// Cumulative client FLOPs over all clients, in units of 1e12.
    pub total_client_tflops: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

impl RoundMetrics {
    pub(crate) fn new(round: usize, loss: f64, eval: &Evaluation, clients: &[ClientCounters]) -> Self {
        let n = clients.len().max(1) as f64;
        Self {
            round,
            loss,
            accuracy: eval.metrics.accuracy,
            precision: eval.metrics.precision,
            recall: eval.metrics.recall,
            f1: eval.metrics.f1,
            avg_client_sec: clients.iter().map(|c| c.seconds).sum::<f64>() / n,
            total_client_tflops: clients.iter().map(|c| c.flops as f64).sum::<f64>() / 1e12,
            bytes_up: clients.iter().map(|c| c.bytes_up).sum(),
            bytes_down: clients.iter().map(|c| c.bytes_down).sum(),
        }
    }
}

/// Weights `D_u / sum_j D_j`.
pub fn data_weights(sizes: &[usize]) -> Result<Vec<f64>> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(CoreError::domain("aggregation weights sum to zero"));
    }
    Ok(sizes.iter().map(|&d| d as f64 / total as f64).collect())
}

/// Whether a run with `target` accuracy should stop after `m`.
pub(crate) fn reached(target: Option<f64>, m: &RoundMetrics) -> bool {
    target.is_some_and(|t| m.accuracy >= t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_examples() {
        assert_eq!(latency_of(1000, 8000.0).unwrap(), 1.0);
        assert_eq!(latency_of(1000, 16000.0).unwrap(), 0.5);
        // A batch of 32 smashed 8x16x16 activations plus labels, 4 bytes each.
        let bytes = 32 * (2048 + 1) * 4;
        assert_eq!(bytes, 262_272);
        assert!((latency_of(bytes, 1e6).unwrap() - 2.098176).abs() < 1e-12);
        assert!(latency_of(10, 0.0).is_err());
    }

    #[test]
    fn batch_plan_covers_every_sample_once() {
        let plan = batch_plan(70, 32, 1, 0, 0, 0);
        assert_eq!(plan.iter().map(Vec::len).collect::<Vec<_>>(), vec![32, 32, 6]);
        let mut all = plan.concat();
        all.sort_unstable();
        assert_eq!(all, (0..70).collect::<Vec<_>>());
        assert_eq!(plan, batch_plan(70, 32, 1, 0, 0, 0));
        assert_ne!(plan, batch_plan(70, 32, 1, 0, 0, 1));
    }

    #[test]
    fn data_weights_follow_sample_counts() {
        assert_eq!(data_weights(&[1, 3]).unwrap(), vec![0.25, 0.75]);
        assert!(data_weights(&[0, 0]).is_err());
    }
}
