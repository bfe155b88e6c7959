//! Compute block: CPU frequencies and latency cap for fixed uplink rates.
//!
//! For a given cap every device runs as slowly as the cap allows,
//! `phi_u(cap) = max(phi_min, c_u / (cap - t_u))`, so the block reduces to a
//! convex scalar problem in the cap whose derivative is
//!
//! ```text
//! f'(cap) = (1-alpha)*G - alpha*G * sum_{u interior} 2*xi*phi_u(cap)^3
//! ```
//!
//! The optimum is the smallest feasible cap with `f'(cap) >= 0`.

use super::{check_finite, AllocationProblem};
use crate::error::{RadioError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemAResult {
    pub freqs: Vec<f64>,
    pub latency_cap: f64,
    /// Multipliers of the per-device latency constraints.
    pub multipliers: Vec<f64>,
}

/// Stationary frequency `cbrt(l / (2*alpha*G*xi))`, clipped to the bounds.
pub fn frequency_from_multiplier(
    multiplier: f64,
    weight: f64,
    rounds: f64,
    capacitance: f64,
    freq_min: f64,
    freq_max: f64,
) -> f64 {
    (multiplier / (2.0 * weight * rounds * capacitance)).cbrt().clamp(freq_min, freq_max)
}

pub fn solve_subproblem_a(prob: &AllocationProblem, rates: &[f64]) -> Result<SubproblemAResult> {
    let m = prob.len();
    if rates.len() != m {
        return Err(RadioError::domain(format!("{} rates for {m} devices", rates.len())));
    }
    for (u, &r) in rates.iter().enumerate() {
        if !(r > 0.0 && r.is_finite()) {
            return Err(RadioError::domain(format!("rate of device {u} must be positive and finite, got {r}")));
        }
    }
    let alpha = prob.sys.weight;
    let g = prob.sys.rounds();
    let xi = prob.sys.capacitance;
    let uplink: Vec<f64> = (0..m).map(|u| prob.devices[u].payload_bits / rates[u]).collect();
    let cycles: Vec<f64> = (0..m).map(|u| prob.cycles(u)).collect();

    let fastest = (0..m)
        .map(|u| cycles[u] / prob.devices[u].freq_max + uplink[u])
        .fold(f64::NEG_INFINITY, f64::max);
    let slowest = (0..m)
        .map(|u| cycles[u] / prob.devices[u].freq_min + uplink[u])
        .fold(f64::NEG_INFINITY, f64::max);

    // Latency-only weighting: energy is free, so every device runs flat out.
    let freq_at = |cap: f64, u: usize| {
        let dev = &prob.devices[u];
        let slack = cap - uplink[u];
        let wanted = cycles[u] / slack;
        if alpha == 0.0 || slack <= 0.0 || wanted >= dev.freq_max * (1.0 - 1e-12) {
            dev.freq_max
        } else {
            wanted.max(dev.freq_min)
        }
    };
    let slope = |cap: f64| {
        let mut s = (1.0 - alpha) * g;
        for u in 0..m {
            let slack = cap - uplink[u];
            let wanted = cycles[u] / slack;
            if wanted > prob.devices[u].freq_min {
                let f = wanted.min(prob.devices[u].freq_max);
                s -= alpha * g * 2.0 * xi * f * f * f;
            }
        }
        s
    };

    let cap = if alpha == 0.0 || slope(fastest) >= 0.0 {
        fastest
    } else {
        let (mut lo, mut hi) = (fastest, slowest);
        for _ in 0..200 {
            if hi - lo <= 1e-15 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let cap = check_finite(cap, 0, "latency cap")?;
    let freqs: Vec<f64> = (0..m).map(|u| freq_at(cap, u)).collect();

    // Multipliers: tight devices at an interior frequency carry the
    // stationary value; the remaining cap price is absorbed by tight
    // devices sitting on a frequency bound.
    let tight: Vec<bool> = (0..m)
        .map(|u| (cycles[u] / freqs[u] + uplink[u] - cap).abs() <= 1e-9 * cap)
        .collect();
    let target = (1.0 - alpha) * g;
    let mut multipliers: Vec<f64> = (0..m)
        .map(|u| if tight[u] && alpha > 0.0 { 2.0 * alpha * g * xi * freqs[u].powi(3) } else { 0.0 })
        .collect();
    let residual = target - multipliers.iter().sum::<f64>();
    let at_max = |u: usize| freqs[u] >= prob.devices[u].freq_max * (1.0 - 1e-12);
    let at_min = |u: usize| freqs[u] <= prob.devices[u].freq_min * (1.0 + 1e-12);
    if residual > 0.0 {
        let mut absorbers: Vec<usize> = (0..m).filter(|&u| tight[u] && at_max(u)).collect();
        if absorbers.is_empty() {
            absorbers = (0..m).filter(|&u| tight[u]).collect();
        }
        let share = residual / absorbers.len() as f64;
        for u in absorbers {
            multipliers[u] += share;
        }
    } else if residual < 0.0 {
        let mut absorbers: Vec<usize> = (0..m).filter(|&u| tight[u] && at_min(u)).collect();
        if absorbers.is_empty() {
            absorbers = (0..m).filter(|&u| tight[u]).collect();
        }
        let pool: f64 = absorbers.iter().map(|&u| multipliers[u]).sum();
        let scale = (1.0 + residual / pool).max(0.0);
        for u in absorbers {
            multipliers[u] *= scale;
        }
    }

    Ok(SubproblemAResult { freqs, latency_cap: cap, multipliers })
}
