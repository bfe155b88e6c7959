//! Joint transmit-power, bandwidth and CPU-frequency allocation.
//!
//! The objective is
//!
//! ```text
//! alpha*G * sum_u (rho_u*delta_u/rate_u + xi*L*chi_u*D_u*phi_u^2) + (1-alpha)*G*cap
//! ```
//!
//! subject to every device finishing a round within `cap`, per-device power
//! and frequency bounds, and `sum_u b_u <= b_total`. The problem is not
//! jointly convex, so [`alternate_optimize`] alternates two convex blocks:
//!
//! * the compute block ([`solve_subproblem_a`]): CPU frequencies and the
//!   latency cap for fixed uplink rates;
//! * the radio block ([`solve_subproblem_b`]): powers and bandwidths for
//!   fixed frequencies, a sum-of-ratios program reduced to separable convex
//!   bandwidth water-filling with closed-form per-device responses.
//!
//! [`brute_force_allocate`] is an exhaustive grid oracle for small instances.

mod compute;
mod coupled;
mod oracle;
mod radio;
mod roots;

pub use compute::{frequency_from_multiplier, solve_subproblem_a, SubproblemAResult};
pub use oracle::brute_force_allocate;
pub use radio::{
    kkt_power, kkt_ratio, newton_residual, rate_tight_bandwidth, solve_subproblem_b,
    DinkelbachState, NewtonResidual, RadioSolution,
};

use crate::error::{RadioError, Result};
use crate::wireless::{rate_unchecked, DeviceProfile, SystemParams};

/// A validated allocation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub devices: Vec<DeviceProfile>,
    pub sys: SystemParams,
}

impl AllocationProblem {
    pub fn new(devices: Vec<DeviceProfile>, sys: SystemParams) -> Result<Self> {
        sys.validate()?;
        if devices.len() != sys.device_count {
            return Err(RadioError::domain(format!(
                "{} device profiles for device_count {}",
                devices.len(),
                sys.device_count
            )));
        }
        for d in &devices {
            d.validate()?;
        }
        Ok(Self { devices, sys })
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub(crate) fn cycles(&self, u: usize) -> f64 {
        self.devices[u].cycles_per_round(self.sys.local_iters)
    }

    /// `gamma_u / N0`, the SNR per watt per hertz.
    pub(crate) fn snr_coeff(&self, u: usize) -> f64 {
        self.devices[u].channel_gain / self.sys.noise_psd
    }

    pub(crate) fn rate(&self, u: usize, power: f64, bandwidth: f64) -> f64 {
        if bandwidth <= 0.0 {
            return 0.0;
        }
        rate_unchecked(bandwidth, power, self.snr_coeff(u))
    }

    pub(crate) fn rates(&self, powers: &[f64], bandwidths: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|u| self.rate(u, powers[u], bandwidths[u])).collect()
    }

    /// Smallest cap compatible with the given allocation.
    pub fn induced_cap(&self, powers: &[f64], bandwidths: &[f64], freqs: &[f64]) -> f64 {
        (0..self.len())
            .map(|u| {
                self.cycles(u) / freqs[u]
                    + self.devices[u].payload_bits / self.rate(u, powers[u], bandwidths[u])
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Total energy `E` and completion time `T` over all global rounds.
    pub fn energy_and_time(&self, powers: &[f64], bandwidths: &[f64], freqs: &[f64]) -> (f64, f64) {
        let g = self.sys.rounds();
        let mut energy = 0.0;
        for u in 0..self.len() {
            let dev = &self.devices[u];
            let rate = self.rate(u, powers[u], bandwidths[u]);
            let c = self.cycles(u);
            energy += powers[u] * dev.payload_bits / rate + self.sys.capacitance * c * freqs[u] * freqs[u];
        }
        (g * energy, g * self.induced_cap(powers, bandwidths, freqs))
    }

    /// Largest relative violation of the bandwidth budget, the per-device
    /// latency caps, and the power/frequency bounds.
    pub fn max_constraint_violation(&self, powers: &[f64], bandwidths: &[f64], freqs: &[f64], cap: f64) -> f64 {
        let total: f64 = bandwidths.iter().sum();
        let mut worst = ((total - self.sys.total_bandwidth) / self.sys.total_bandwidth).max(0.0);
        for (u, dev) in self.devices.iter().enumerate() {
            let t = self.cycles(u) / freqs[u] + dev.payload_bits / self.rate(u, powers[u], bandwidths[u]);
            worst = worst.max((t - cap) / cap);
            worst = worst.max((dev.power_min - powers[u]) / dev.power_min);
            worst = worst.max((powers[u] - dev.power_max) / dev.power_max);
            worst = worst.max((dev.freq_min - freqs[u]) / dev.freq_min);
            worst = worst.max((freqs[u] - dev.freq_max) / dev.freq_max);
            worst = worst.max(-bandwidths[u] / self.sys.total_bandwidth);
        }
        if worst.is_nan() {
            f64::INFINITY
        } else {
            worst.max(0.0)
        }
    }
}

/// Weighted energy/latency objective at a given point.
pub fn evaluate_objective(
    prob: &AllocationProblem,
    powers: &[f64],
    bandwidths: &[f64],
    freqs: &[f64],
    cap: f64,
) -> f64 {
    let alpha = prob.sys.weight;
    let g = prob.sys.rounds();
    let mut energy = 0.0;
    for u in 0..prob.len() {
        let dev = &prob.devices[u];
        let rate = prob.rate(u, powers[u], bandwidths[u]);
        energy += powers[u] * dev.payload_bits / rate + prob.sys.capacitance * prob.cycles(u) * freqs[u] * freqs[u];
    }
    alpha * g * energy + (1.0 - alpha) * g * cap
}

/// How the radio block treats the latency cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapMode {
    /// The radio block keeps the cap produced by the compute block and only
    /// meets the implied minimum rates.
    Fixed,
    /// The radio block also re-optimizes the cap (with frequencies fixed),
    /// so communication time can be traded against latency as well.
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationOptions {
    /// Relative change in `(rho, b, phi)` that ends the outer loop.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub cap_mode: CapMode,
    /// Try the coupled frequency/bandwidth step when alternation stalls.
    pub coupled_step: bool,
}

impl Default for AllocationOptions {
    fn default() -> Self {
        Self { outer_tol: 1e-4, max_outer: 200, cap_mode: CapMode::Joint, coupled_step: true }
    }
}

/// One row of the outer-loop trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub energy: f64,
    pub time: f64,
    pub max_constraint_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    pub powers: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub freqs: Vec<f64>,
    pub latency_cap: f64,
    pub objective: f64,
    pub energy: f64,
    pub time: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Vec<IterationRecord>,
    /// Radio-block certificate for the returned powers and bandwidths.
    pub radio: Option<RadioSolution>,
}

/// Complementary-slackness residuals of the radio block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest `|rate_u - min_rate_u| / min_rate_u` over devices with a
    /// positive rate multiplier.
    pub rate_slackness: f64,
    /// `|sum b - b_total| / b_total` when the bandwidth multiplier is positive.
    pub bandwidth_slackness: f64,
    /// Relative Newton residual of the ratio parameters.
    pub newton_residual: f64,
}

impl AllocationSolution {
    fn from_point(
        prob: &AllocationProblem,
        powers: Vec<f64>,
        bandwidths: Vec<f64>,
        freqs: Vec<f64>,
    ) -> Self {
        let cap = prob.induced_cap(&powers, &bandwidths, &freqs);
        let objective = evaluate_objective(prob, &powers, &bandwidths, &freqs, cap);
        let (energy, time) = prob.energy_and_time(&powers, &bandwidths, &freqs);
        Self {
            powers,
            bandwidths,
            freqs,
            latency_cap: cap,
            objective,
            energy,
            time,
            iterations: 0,
            converged: true,
            trajectory: Vec::new(),
            radio: None,
        }
    }

    pub fn kkt_report(&self, prob: &AllocationProblem) -> Option<KktReport> {
        let radio = self.radio.as_ref()?;
        let mut rate_slackness: f64 = 0.0;
        for u in 0..prob.len() {
            let target = radio.min_rates[u];
            if radio.state.theta[u] > 0.0 && target > 0.0 {
                let rate = prob.rate(u, self.powers[u], self.bandwidths[u]);
                rate_slackness = rate_slackness.max((rate - target).abs() / target);
            }
        }
        let b_total = prob.sys.total_bandwidth;
        let bandwidth_slackness = if radio.state.mu > 0.0 {
            (self.bandwidths.iter().sum::<f64>() - b_total).abs() / b_total
        } else {
            0.0
        };
        Some(KktReport { rate_slackness, bandwidth_slackness, newton_residual: radio.residual_norm })
    }
}

fn relative_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Alternates the compute and radio blocks from the feasible start
/// `rho = rho_max`, `b = b_total / M`, `phi = phi_max` until the relative
/// change of every decision variable is below `outer_tol`.
///
/// When the alternation stalls, a coupled step (see `coupled`) that moves
/// frequencies and bandwidths together is tried once; if it improves the
/// objective the alternation resumes from there. The returned powers and
/// bandwidths are finally re-solved by the radio block at the final
/// frequencies and cap, which provides the multiplier certificate.
///
/// The recorded objective is non-increasing: a step that fails to improve
/// (possible only at numerical tolerance) is rejected.
pub fn alternate_optimize(prob: &AllocationProblem, opts: &AllocationOptions) -> Result<AllocationSolution> {
    let m = prob.len();
    let b_share = prob.sys.total_bandwidth / m as f64;
    let mut powers: Vec<f64> = prob.devices.iter().map(|d| d.power_max).collect();
    let mut bandwidths = vec![b_share; m];
    let mut freqs: Vec<f64> = prob.devices.iter().map(|d| d.freq_max).collect();
    let alpha = prob.sys.weight;

    let record = |iter: usize, p: &[f64], b: &[f64], f: &[f64], cap: f64| {
        let (energy, time) = prob.energy_and_time(p, b, f);
        IterationRecord {
            iter,
            objective: evaluate_objective(prob, p, b, f, cap),
            energy,
            time,
            max_constraint_violation: prob.max_constraint_violation(p, b, f, cap),
        }
    };
    let accepts = |new: f64, old: f64| new <= old + 1e-9 * old.abs();

    let mut cap = prob.induced_cap(&powers, &bandwidths, &freqs);
    let mut trajectory = vec![record(0, &powers, &bandwidths, &freqs, cap)];
    let mut converged = false;
    let mut k = 0;
    let mut coupled_tried = !opts.coupled_step || alpha <= 0.0 || alpha >= 1.0;

    loop {
        while k < opts.max_outer {
            k += 1;
            let current = trajectory.last().expect("trajectory starts non-empty").objective;
            let rates = prob.rates(&powers, &bandwidths);
            let a = solve_subproblem_a(prob, &rates)?;
            let obj_a = evaluate_objective(prob, &powers, &bandwidths, &a.freqs, a.latency_cap);
            let radio = match opts.cap_mode {
                CapMode::Fixed => radio::solve_subproblem_b(prob, &a.freqs, a.latency_cap)?,
                CapMode::Joint => radio::solve_joint(prob, &a.freqs)?.0,
            };
            let cap_b = prob.induced_cap(&radio.powers, &radio.bandwidths, &a.freqs);
            let obj_b = evaluate_objective(prob, &radio.powers, &radio.bandwidths, &a.freqs, cap_b);

            let change;
            if accepts(obj_b, obj_a) && obj_b <= current {
                change = relative_change(&powers, &radio.powers)
                    .max(relative_change(&bandwidths, &radio.bandwidths))
                    .max(relative_change(&freqs, &a.freqs));
                powers = radio.powers;
                bandwidths = radio.bandwidths;
                freqs = a.freqs;
                cap = cap_b;
            } else if obj_a <= current {
                // The radio step could not improve within tolerance; keep the
                // compute step and stop alternating.
                change = 0.0;
                freqs = a.freqs;
                cap = a.latency_cap;
            } else {
                k -= 1;
                converged = true;
                break;
            }
            trajectory.push(record(k, &powers, &bandwidths, &freqs, cap));
            if change < opts.outer_tol {
                converged = true;
                break;
            }
        }
        if coupled_tried || k >= opts.max_outer {
            break;
        }
        coupled_tried = true;
        let (p, b, f) = coupled::solve_coupled(prob)?;
        let cap_c = prob.induced_cap(&p, &b, &f);
        let obj_c = evaluate_objective(prob, &p, &b, &f, cap_c);
        let current = trajectory.last().expect("trajectory starts non-empty").objective;
        if obj_c < current - 1e-9 * current.abs() {
            k += 1;
            powers = p;
            bandwidths = b;
            freqs = f;
            cap = cap_c;
            trajectory.push(record(k, &powers, &bandwidths, &freqs, cap));
            converged = false;
        } else {
            break;
        }
    }

    // Certificate: the radio block at the final frequencies and cap. A
    // point on the feasibility boundary (maximum power, whole budget) can
    // induce a cap a rounding error below the smallest one the radio block
    // accepts, so the cap is lifted to that bound first.
    let mut radio_cert = None;
    let cert_cap = radio::min_feasible_cap(prob, &freqs).map_or(cap, |lo| cap.max(lo));
    if let Ok(radio) = radio::solve_subproblem_b(prob, &freqs, cert_cap) {
        let cap_r = prob.induced_cap(&radio.powers, &radio.bandwidths, &freqs);
        let obj_r = evaluate_objective(prob, &radio.powers, &radio.bandwidths, &freqs, cap_r);
        let current = trajectory.last().expect("trajectory starts non-empty").objective;
        if accepts(obj_r, current) {
            powers.clone_from(&radio.powers);
            bandwidths.clone_from(&radio.bandwidths);
            radio_cert = Some(radio);
        }
    }

    let mut sol = AllocationSolution::from_point(prob, powers, bandwidths, freqs);
    sol.iterations = k;
    sol.converged = converged;
    sol.trajectory = trajectory;
    sol.radio = radio_cert;
    Ok(sol)
}

pub(crate) fn check_finite(value: f64, device: usize, equation: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(RadioError::NonFinite { device, equation })
    }
}

/// Residual of the ratio parameters at the returned radio point, reused by
/// the trajectory CSV.
pub fn newton_residual_of(prob: &AllocationProblem, sol: &AllocationSolution) -> Option<NewtonResidual> {
    sol.radio
        .as_ref()
        .map(|r| newton_residual(&r.state, &sol.powers, &sol.bandwidths, prob))
}

#[cfg(test)]
mod tests;
