//! Radio block: transmit powers and bandwidths for fixed CPU frequencies.
//!
//! The block minimizes `alpha*G * sum_u rho_u*delta_u / rate_u(rho_u, b_u)`
//! subject to per-device minimum rates, power bounds and the bandwidth
//! budget.
//!
//! For a fixed bandwidth the energy per round `rho*delta/rate` increases
//! with power, so each device transmits at the smallest power that meets its
//! minimum rate: `rho_u(b) = max(rho_min, rate-tight power)`. The resulting
//! per-device energy `E_u(b)` is convex and decreasing on
//! `b >= b_min,u` (the bandwidth that meets the rate at `rho_max`), so the
//! block is a separable convex resource allocation solved by bisecting on
//! the bandwidth price `mu`. Each device's response to a price has a closed
//! form on the rate-tight branch and a one-dimensional monotone equation on
//! the minimum-power branch.
//!
//! The ratio parameters of the equivalent parametric (sum-of-ratios) form,
//! `upsilon_u = alpha*G / rate_u` and `zeta_u = rho_u*delta_u / rate_u`,
//! and the multipliers `theta_u` (minimum rates) and `mu` (budget) are
//! reported at the optimum together with the Newton residual of that form.
//!
//! In [`CapMode::Joint`](super::CapMode::Joint) the block additionally
//! searches the latency cap: with frequencies fixed, the objective
//! `(1-alpha)*G*cap + V(cap)` is convex in the cap, and its derivative is
//! assembled from the rate-constraint multipliers.

use std::f64::consts::LN_2;

use super::roots::{h, illinois, k_inv, log_ratio_inv};
use super::{check_finite, AllocationProblem};
use crate::error::{RadioError, Result};
use crate::wireless::DeviceProfile;

/// Ratio parameters and multipliers of the radio block.
#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachState {
    pub upsilon: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Multipliers of the per-device minimum-rate constraints.
    pub theta: Vec<f64>,
    /// Multiplier of the bandwidth budget.
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioSolution {
    pub powers: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub state: DinkelbachState,
    /// Minimum rates the solution was asked to meet.
    pub min_rates: Vec<f64>,
    /// Evaluations of the budget equation spent finding the bandwidth price.
    pub iterations: usize,
    /// Relative Newton-residual norm at the returned point.
    pub residual_norm: f64,
    pub converged: bool,
}

/// Residual of the ratio parameters:
/// `phi1_u = zeta_u * rate_u - rho_u * delta_u` and
/// `phi2_u = upsilon_u * rate_u - alpha*G`.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResidual {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    /// Each residual scaled by its own target (`rho_u*delta_u` and `alpha*G`).
    pub relative: Vec<f64>,
}

impl NewtonResidual {
    /// Euclidean norm of the raw residual.
    pub fn norm(&self) -> f64 {
        self.phi1.iter().chain(&self.phi2).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean norm of the scaled residual.
    pub fn relative_norm(&self) -> f64 {
        self.relative.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn newton_residual(
    state: &DinkelbachState,
    powers: &[f64],
    bandwidths: &[f64],
    prob: &AllocationProblem,
) -> NewtonResidual {
    let ag = prob.sys.weight * prob.sys.rounds();
    let m = prob.len();
    let mut phi1 = Vec::with_capacity(m);
    let mut phi2 = Vec::with_capacity(m);
    let mut relative = Vec::with_capacity(2 * m);
    for u in 0..m {
        let rate = prob.rate(u, powers[u], bandwidths[u]);
        let pd = powers[u] * prob.devices[u].payload_bits;
        phi1.push(state.zeta[u] * rate - pd);
        phi2.push(state.upsilon[u] * rate - ag);
        relative.push(state.zeta[u] * rate / pd - 1.0);
        if ag > 0.0 {
            relative.push(state.upsilon[u] * rate / ag - 1.0);
        }
    }
    NewtonResidual { phi1, phi2, relative }
}

/// Power from the stationarity condition, `rho = (Lambda - 1) * b / s`,
/// clipped to the bounds, where `s = gamma / N0`.
pub fn kkt_power(lambda: f64, bandwidth: f64, snr_coeff: f64, power_min: f64, power_max: f64) -> f64 {
    ((lambda - 1.0) * bandwidth / snr_coeff).clamp(power_min, power_max)
}

/// `Lambda = (upsilon*zeta + theta) * s / (upsilon * delta * ln 2)`, the
/// value of `1 + SNR` at which the power gradient vanishes.
pub fn kkt_ratio(upsilon: f64, zeta: f64, theta: f64, snr_coeff: f64, payload_bits: f64) -> f64 {
    (upsilon * zeta + theta) * snr_coeff / (upsilon * payload_bits * LN_2)
}

/// Bandwidth at which `power` delivers exactly `min_rate`, or `None` when
/// no finite bandwidth suffices (`min_rate >= power * s / ln 2`).
pub fn rate_tight_bandwidth(power: f64, snr_coeff: f64, min_rate: f64) -> Option<f64> {
    let p = power * snr_coeff;
    let q = min_rate * LN_2 / p;
    if !(q < 1.0) {
        return None;
    }
    if q <= 0.0 {
        return Some(0.0);
    }
    Some(p / log_ratio_inv(q))
}

/// Per-device constants of the radio block for one minimum rate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DeviceResponse {
    snr: f64,
    payload: f64,
    p_min: f64,
    p_max: f64,
    min_rate: f64,
    /// Bandwidth meeting the minimum rate at maximum power.
    b_min: f64,
    /// Bandwidth meeting the minimum rate at minimum power (infinite when
    /// minimum power cannot reach it).
    b_junction: f64,
}

/// A device's best response to a bandwidth price.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Response {
    pub power: f64,
    pub bandwidth: f64,
    /// Rate multiplier per unit of `alpha*G`.
    pub theta: f64,
}

impl DeviceResponse {
    /// `b_limit` caps the bandwidth considered when checking that the rate
    /// is reachable at maximum power; beyond it `b_min` is infinite.
    pub(crate) fn new(snr: f64, d: &DeviceProfile, min_rate: f64, b_limit: f64) -> Self {
        let b_min = match rate_tight_bandwidth(d.power_max, snr, min_rate) {
            Some(b) if b <= b_limit => b,
            _ => f64::INFINITY,
        };
        let b_junction = rate_tight_bandwidth(d.power_min, snr, min_rate).unwrap_or(f64::INFINITY);
        Self {
            snr,
            payload: d.payload_bits,
            p_min: d.power_min,
            p_max: d.power_max,
            min_rate,
            b_min,
            b_junction,
        }
    }

    /// Best response to `price` (per unit of `alpha*G`).
    pub(crate) fn respond(&self, price: f64) -> Response {
        let bandwidth = self.response(price);
        let power = self.power_at(bandwidth);
        let rate = self.rate(power, bandwidth);
        let theta = if self.min_rate > 0.0 && rate <= self.min_rate * (1.0 + 1e-9) {
            let omega = power * self.snr / bandwidth;
            (price / h(omega) - power * self.payload / (rate * rate)).max(0.0)
        } else {
            0.0
        };
        Response { power, bandwidth, theta }
    }

    fn rate(&self, power: f64, bandwidth: f64) -> f64 {
        if bandwidth <= 0.0 {
            0.0
        } else {
            bandwidth * (power * self.snr / bandwidth).ln_1p() / LN_2
        }
    }

    /// Smallest power meeting the minimum rate with bandwidth `b`.
    fn power_at(&self, b: f64) -> f64 {
        if b >= self.b_junction {
            return self.p_min;
        }
        // (2^(r/b) - 1) * b / s
        let tight = (self.min_rate / b * LN_2).exp_m1() * b / self.snr;
        tight.clamp(self.p_min, self.p_max)
    }

    /// Bandwidth minimizing `E(b) + price * b` over `b >= b_min`, where
    /// `E(b) = rho(b) * delta / rate(rho(b), b)`.
    fn response(&self, price: f64) -> f64 {
        if self.b_junction > self.b_min {
            // Rate-tight branch: -E'(b) = delta * k(omega) * ln 2 / (s * r).
            let omega = k_inv(price * self.snr * self.min_rate / (self.payload * LN_2));
            let b = self.min_rate * LN_2 / omega.ln_1p();
            if b <= self.b_min {
                return self.b_min;
            }
            if b <= self.b_junction {
                return b;
            }
        }
        // Minimum-power branch, in x = ln(1 + omega) with omega = rho_min*s/b:
        // -E'(b) = delta * h(omega) * omega^2 * ln2^2 / (rho_min * s^2 * x^2).
        let scale = self.payload * LN_2 * LN_2 / (self.p_min * self.snr * self.snr);
        let slope = |x: f64| {
            let omega = x.exp_m1();
            scale * h(omega) * omega * omega / (x * x)
        };
        let hi = if self.b_junction > 0.0 && self.b_junction.is_finite() {
            (self.p_min * self.snr / self.b_junction).ln_1p()
        } else {
            let mut x = 1.0;
            while slope(x) < price && x < 700.0 {
                x *= 2.0;
            }
            x
        };
        let f_hi = slope(hi) - price;
        let x = if f_hi <= 0.0 {
            hi
        } else {
            let (a, b) = illinois(|x| slope(x) - price, 0.0, hi, -price, f_hi, 1e-14);
            0.5 * (a + b)
        };
        self.p_min * self.snr / x.exp_m1()
    }
}

fn devices(prob: &AllocationProblem, min_rates: &[f64]) -> Result<Vec<DeviceResponse>> {
    let b_total = prob.sys.total_bandwidth;
    let mut bad = Vec::new();
    let mut out = Vec::with_capacity(prob.len());
    for (u, d) in prob.devices.iter().enumerate() {
        let dev = DeviceResponse::new(prob.snr_coeff(u), d, min_rates[u], b_total);
        if !dev.b_min.is_finite() {
            bad.push(u);
        }
        out.push(dev);
    }
    if !bad.is_empty() {
        return Err(RadioError::Infeasible {
            devices: bad,
            reason: "minimum rate unreachable at maximum power within the bandwidth budget".into(),
        });
    }
    if out.iter().map(|d| d.b_min).sum::<f64>() > b_total {
        return Err(RadioError::Infeasible {
            devices: (0..out.len()).filter(|&u| min_rates[u] > 0.0).collect(),
            reason: "minimum rates need more than the bandwidth budget at maximum power".into(),
        });
    }
    Ok(out)
}

/// Minimum uplink rates implied by a latency cap and frequencies.
pub(crate) fn min_rates_for(prob: &AllocationProblem, freqs: &[f64], cap: f64) -> Result<Vec<f64>> {
    let mut bad = Vec::new();
    let rates: Vec<f64> = (0..prob.len())
        .map(|u| {
            let slack = cap - prob.cycles(u) / freqs[u];
            if slack <= 0.0 {
                bad.push(u);
                f64::INFINITY
            } else {
                prob.devices[u].payload_bits / slack
            }
        })
        .collect();
    if bad.is_empty() {
        Ok(rates)
    } else {
        Err(RadioError::Infeasible { devices: bad, reason: "computation alone exceeds the latency cap".into() })
    }
}

fn finish(
    prob: &AllocationProblem,
    devs: &[DeviceResponse],
    powers: Vec<f64>,
    bandwidths: Vec<f64>,
    mu: f64,
    iterations: usize,
) -> Result<RadioSolution> {
    let ag = prob.sys.weight * prob.sys.rounds();
    let m = devs.len();
    let mut upsilon = Vec::with_capacity(m);
    let mut zeta = Vec::with_capacity(m);
    let mut theta = Vec::with_capacity(m);
    for (u, d) in devs.iter().enumerate() {
        let rate = check_finite(d.rate(powers[u], bandwidths[u]), u, "uplink rate")?;
        let ups = ag / rate;
        let zet = powers[u] * d.payload / rate;
        let tight = d.min_rate > 0.0 && rate <= d.min_rate * (1.0 + 1e-9);
        // Bandwidth stationarity: (upsilon*zeta + theta) * h(omega) = mu.
        let th = if tight && ag > 0.0 {
            let omega = powers[u] * d.snr / bandwidths[u];
            (mu / h(omega) - ups * zet).max(0.0)
        } else {
            0.0
        };
        upsilon.push(ups);
        zeta.push(zet);
        theta.push(th);
    }
    let state = DinkelbachState { upsilon, zeta, theta, mu };
    let residual_norm = newton_residual(&state, &powers, &bandwidths, prob).relative_norm();
    Ok(RadioSolution {
        powers,
        bandwidths,
        state,
        min_rates: devs.iter().map(|d| d.min_rate).collect(),
        iterations,
        residual_norm,
        converged: true,
    })
}

/// Maximum power on every device, with the budget split in proportion to
/// the bandwidth each needs for its minimum rate (the latency-only optimum).
fn max_power_fill(prob: &AllocationProblem, devs: &[DeviceResponse]) -> Result<RadioSolution> {
    let m = devs.len();
    let b_total = prob.sys.total_bandwidth;
    let needed: f64 = devs.iter().map(|d| d.b_min).sum();
    let bandwidths: Vec<f64> = if needed > 0.0 {
        devs.iter().map(|d| d.b_min * b_total / needed).collect()
    } else {
        vec![b_total / m as f64; m]
    };
    let powers = devs.iter().map(|d| d.p_max).collect();
    finish(prob, devs, powers, bandwidths, 0.0, 0)
}

/// Radio block with fixed minimum rates.
pub(crate) fn solve_fixed(prob: &AllocationProblem, min_rates: &[f64]) -> Result<RadioSolution> {
    let devs = devices(prob, min_rates)?;
    let ag = prob.sys.weight * prob.sys.rounds();
    if ag == 0.0 {
        return max_power_fill(prob, &devs);
    }
    let b_total = prob.sys.total_bandwidth;
    let evals = std::cell::Cell::new(0usize);
    let sum_at = |price: f64| {
        evals.set(evals.get() + 1);
        devs.iter().map(|d| d.response(price)).sum::<f64>()
    };
    let floor: f64 = devs.iter().map(|d| d.b_min).sum();
    if floor >= b_total * (1.0 - 1e-12) {
        // Only the rate-meeting bandwidths fit.
        return max_power_fill(prob, &devs);
    }

    // The response is continuous and non-increasing in the price.
    let (lo, hi, _) = price_bracket(sum_at, b_total, 1e-15)?;
    let (_, hi) = illinois(|p| sum_at(p) - b_total, lo, hi, sum_at(lo) - b_total, sum_at(hi) - b_total, 1e-12);
    let mut bandwidths: Vec<f64> = devs.iter().map(|d| d.response(hi)).collect();
    // Hand the rounding leftover to the devices above their floor so the
    // budget is met with equality.
    let used: f64 = bandwidths.iter().sum();
    let spare: f64 = devs.iter().zip(&bandwidths).map(|(d, b)| b - d.b_min).sum();
    if used < b_total && spare > 0.0 {
        let grow = (b_total - used) / spare;
        for (b, d) in bandwidths.iter_mut().zip(&devs) {
            *b += (*b - d.b_min) * grow;
        }
    }
    let powers = devs.iter().zip(&bandwidths).map(|(d, &b)| d.power_at(b)).collect();
    finish(prob, &devs, powers, bandwidths, ag * hi, evals.get())
}

/// Brackets the price at which `sum_at(price) = b_total`, for a
/// non-increasing `sum_at`, searching outwards from `start`. Returns
/// `(lo, hi, steps)` with `sum_at(lo) > b_total >= sum_at(hi)`.
pub(crate) fn price_bracket(sum_at: impl Fn(f64) -> f64, b_total: f64, start: f64) -> Result<(f64, f64, usize)> {
    let start = if start > 0.0 && start.is_finite() { start } else { 1e-15 };
    let (mut lo, mut hi) = (start, start);
    let mut steps = 0;
    if sum_at(hi) > b_total {
        while sum_at(hi) > b_total {
            lo = hi;
            hi *= 8.0;
            steps += 1;
            if steps > 500 {
                return Err(RadioError::NonFinite { device: 0, equation: "bandwidth price bracket" });
            }
        }
    } else {
        while sum_at(lo) <= b_total {
            hi = lo;
            lo /= 8.0;
            steps += 1;
            if steps > 500 || lo == 0.0 {
                return Err(RadioError::NonFinite { device: 0, equation: "bandwidth price bracket" });
            }
        }
    }
    Ok((lo, hi, steps))
}

/// Radio block for fixed frequencies and latency cap.
pub fn solve_subproblem_b(prob: &AllocationProblem, freqs: &[f64], cap: f64) -> Result<RadioSolution> {
    if freqs.len() != prob.len() {
        return Err(RadioError::domain(format!("{} frequencies for {} devices", freqs.len(), prob.len())));
    }
    let min_rates = min_rates_for(prob, freqs, cap)?;
    solve_fixed(prob, &min_rates)
}

/// Smallest latency cap the budget can support with these frequencies.
pub(crate) fn min_feasible_cap(prob: &AllocationProblem, freqs: &[f64]) -> Result<f64> {
    let compute: Vec<f64> = (0..prob.len()).map(|u| prob.cycles(u) / freqs[u]).collect();
    let floor = compute.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let feasible =
        |cap: f64| min_rates_for(prob, freqs, cap).map(|r| devices(prob, &r).is_ok()).unwrap_or(false);
    let mut hi = floor + compute.iter().sum::<f64>().max(1e-9);
    let mut doublings = 0;
    while !feasible(hi) {
        hi = floor + 2.0 * (hi - floor);
        doublings += 1;
        if doublings > 2000 {
            return Err(RadioError::Infeasible {
                devices: (0..prob.len()).collect(),
                reason: "no latency cap is feasible".into(),
            });
        }
    }
    let mut lo = floor;
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Radio block that also chooses the latency cap for fixed frequencies.
/// Returns the radio solution and its cap.
pub(crate) fn solve_joint(prob: &AllocationProblem, freqs: &[f64]) -> Result<(RadioSolution, f64)> {
    let m = prob.len();
    let alpha = prob.sys.weight;
    let compute: Vec<f64> = (0..m).map(|u| prob.cycles(u) / freqs[u]).collect();
    let cap_lo = min_feasible_cap(prob, freqs)?;
    if alpha == 0.0 {
        let min_rates = min_rates_for(prob, freqs, cap_lo)?;
        return Ok((solve_fixed(prob, &min_rates)?, cap_lo));
    }

    // Without rate constraints the block is energy-optimal; its induced
    // latency bounds the search from above.
    let free = solve_fixed(prob, &vec![0.0; m])?;
    let cap_hi = prob.induced_cap(&free.powers, &free.bandwidths, freqs);
    if alpha == 1.0 || cap_hi <= cap_lo {
        return Ok((free, cap_hi.max(cap_lo)));
    }

    let price = (1.0 - alpha) * prob.sys.rounds();
    let slope = |cap: f64| -> Result<(f64, RadioSolution)> {
        let min_rates = min_rates_for(prob, freqs, cap)?;
        let sol = solve_fixed(prob, &min_rates)?;
        let mut s = price;
        for u in 0..m {
            let slack = cap - compute[u];
            s -= sol.state.theta[u] * prob.devices[u].payload_bits / (slack * slack);
        }
        Ok((s, sol))
    };

    let (mut lo, mut hi) = (cap_lo, cap_hi);
    let mut best = (free, cap_hi);
    for _ in 0..200 {
        if hi - lo <= 1e-9 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (s, sol) = match slope(mid) {
            Ok(v) => v,
            Err(RadioError::Infeasible { .. }) => {
                lo = mid;
                continue;
            }
            Err(e) => return Err(e),
        };
        if s < 0.0 {
            lo = mid;
        } else {
            hi = mid;
            best = (sol, mid);
        }
    }
    Ok(best)
}
