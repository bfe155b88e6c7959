//! Single-machine reference trainer.
//!
//! Uses the same batch orders and dropout keys as client 0 of the split
//! and federated trainers, so a one-client run of either reproduces it.

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::nn::{backward, cross_entropy, forward, ModelSpec, Optimizer, OptimizerKind, Params};
use crate::train::{batch_plan, dropout_mode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralConfig {
    pub rounds: usize,
    pub epochs_per_round: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

/// Trains `params` in place and returns the mean minibatch loss per round.
pub fn train_centralized(spec: &ModelSpec, params: &mut Params, data: &Dataset, cfg: &CentralConfig) -> Result<Vec<f64>> {
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(CoreError::domain("need a non-empty dataset and a positive batch size"));
    }
    let mut optimizer = Optimizer::new(cfg.optimizer, params);
    let mut losses = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let (mut sum, mut count, mut batch_index) = (0.0, 0usize, 0usize);
        for epoch in 0..cfg.epochs_per_round {
            for idx in batch_plan(data.len(), cfg.batch_size, cfg.seed, 0, round, epoch) {
                let x = data.images.select_rows(&idx);
                let labels: Vec<u8> = idx.iter().map(|&i| data.labels[i]).collect();
                let (trace, logits) = forward(spec, params, &x, dropout_mode(cfg.seed, 0, round, batch_index))?;
                let (loss, dlogits) = cross_entropy(&logits, &labels)?;
                let (grads, _) = backward(spec, params, &trace, &dlogits)?;
                optimizer.step(params, &grads)?;
                sum += loss;
                count += 1;
                batch_index += 1;
            }
        }
        losses.push(if count == 0 { 0.0 } else { sum / count as f64 });
    }
    Ok(losses)
}
