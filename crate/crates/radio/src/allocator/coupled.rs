//! Coupled step: re-splits each device's round between computation and
//! upload while powers, bandwidths, frequencies and the cap move together.
//!
//! Alternating the compute and radio blocks can stop at points where every
//! device is latency-tight at maximum power: moving bandwidth between
//! devices then only pays off if their frequencies move at the same time,
//! which neither block can do alone. This step removes that coupling.
//!
//! For a latency cap and a bandwidth price, each device picks its upload
//! time `tau`: the frequency runs as slowly as `cap - tau` allows, the
//! uplink must deliver `delta / tau`, and the bandwidth is the radio
//! block's response at that rate. The device cost is convex in `tau` with
//! derivative `2*xi*phi^3 - theta*delta/tau^2`, where `theta` is the rate
//! multiplier, so `tau` is found by regula falsi. The price is solved the
//! same way to meet the budget, and the cap from the sign of
//! `(1-alpha)*G - alpha*G * sum_u theta_u*delta_u/tau_u^2`.

use std::f64::consts::LN_2;

use super::radio::{price_bracket, rate_tight_bandwidth, DeviceResponse};
use super::roots::illinois;
use super::AllocationProblem;
use crate::error::{RadioError, Result};

/// One device's choice at a given cap and price.
#[derive(Debug, Clone, Copy)]
struct Choice {
    power: f64,
    bandwidth: f64,
    freq: f64,
    upload_time: f64,
    /// Rate multiplier per unit of `alpha*G`.
    theta: f64,
}

struct Ctx<'a> {
    prob: &'a AllocationProblem,
    cycles: Vec<f64>,
    snr: Vec<f64>,
    /// Price found at the previous cap, used to start the next bracket.
    last_price: std::cell::Cell<f64>,
}

impl Ctx<'_> {
    /// Upload-time range at `cap`, or `None` if the device cannot finish.
    fn tau_range(&self, u: usize, cap: f64) -> Option<(f64, f64)> {
        let d = &self.prob.devices[u];
        let hi = cap - self.cycles[u] / d.freq_max;
        // The uplink rate is capped at rho_max * s / ln 2.
        let rate_floor = d.payload_bits * LN_2 / (d.power_max * self.snr[u]) * (1.0 + 1e-9);
        let lo = (cap - self.cycles[u] / d.freq_min).max(rate_floor);
        (lo < hi).then_some((lo, hi))
    }

    fn at_tau(&self, u: usize, cap: f64, tau: f64, price: f64) -> Choice {
        let d = &self.prob.devices[u];
        let rate = d.payload_bits / tau;
        let resp = DeviceResponse::new(self.snr[u], d, rate, f64::INFINITY).respond(price);
        let freq = (self.cycles[u] / (cap - tau)).clamp(d.freq_min, d.freq_max);
        Choice { power: resp.power, bandwidth: resp.bandwidth, freq, upload_time: tau, theta: resp.theta }
    }

    fn choose(&self, u: usize, cap: f64, price: f64) -> Option<Choice> {
        let (lo, hi) = self.tau_range(u, cap)?;
        let xi = self.prob.sys.capacitance;
        let payload = self.prob.devices[u].payload_bits;
        let slope = |c: &Choice| 2.0 * xi * c.freq.powi(3) - c.theta * payload / (c.upload_time * c.upload_time);
        let first = self.at_tau(u, cap, lo, price);
        if slope(&first) >= 0.0 {
            return Some(first);
        }
        let last = self.at_tau(u, cap, hi, price);
        if slope(&last) <= 0.0 {
            return Some(last);
        }
        let (a, b) = illinois(
            |tau| slope(&self.at_tau(u, cap, tau, price)),
            lo,
            hi,
            slope(&first),
            slope(&last),
            1e-10,
        );
        Some(self.at_tau(u, cap, 0.5 * (a + b), price))
    }

    fn choose_all(&self, cap: f64, price: f64) -> Option<Vec<Choice>> {
        (0..self.prob.len()).map(|u| self.choose(u, cap, price)).collect()
    }

    /// Solves the budget at `cap`; `None` when the cap is infeasible.
    fn at_cap(&self, cap: f64) -> Option<Vec<Choice>> {
        let b_total = self.prob.sys.total_bandwidth;
        // Feasibility: at full speed and maximum power the rate-meeting
        // bandwidths must fit.
        let mut floor = 0.0;
        for (u, d) in self.prob.devices.iter().enumerate() {
            let tau = cap - self.cycles[u] / d.freq_max;
            if tau <= 0.0 {
                return None;
            }
            floor += rate_tight_bandwidth(d.power_max, self.snr[u], d.payload_bits / tau)?;
        }
        if floor >= b_total {
            return None;
        }
        let sum = |cs: &[Choice]| cs.iter().map(|c| c.bandwidth).sum::<f64>();
        // An infeasible device at some price makes the whole cap infeasible.
        let total = |price: f64| self.choose_all(cap, price).map_or(f64::INFINITY, |cs| sum(&cs));
        let (lo, hi, _) = price_bracket(total, b_total, self.last_price.get() * 0.5).ok()?;
        let (_, hi) = illinois(|p| total(p) - b_total, lo, hi, total(lo) - b_total, total(hi) - b_total, 1e-12);
        self.last_price.set(hi);
        self.choose_all(cap, hi)
    }
}

/// Jointly optimal powers, bandwidths and frequencies found by the coupled
/// search, as `(powers, bandwidths, freqs)`. Only meaningful for weights
/// strictly between 0 and 1.
pub(crate) fn solve_coupled(prob: &AllocationProblem) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let m = prob.len();
    let ctx = Ctx {
        prob,
        cycles: (0..m).map(|u| prob.cycles(u)).collect(),
        snr: (0..m).map(|u| prob.snr_coeff(u)).collect(),
        last_price: std::cell::Cell::new(0.0),
    };
    let alpha = prob.sys.weight;
    let g = prob.sys.rounds();

    // Bracket: the fastest feasible cap, and the cap of the energy-only
    // optimum (minimum frequencies, no rate requirements).
    let fastest: Vec<f64> = prob.devices.iter().map(|d| d.freq_max).collect();
    let mut lo = super::radio::min_feasible_cap(prob, &fastest)?;
    let free = super::radio::solve_fixed(prob, &vec![0.0; m])?;
    let slowest: Vec<f64> = prob.devices.iter().map(|d| d.freq_min).collect();
    let mut hi = prob.induced_cap(&free.powers, &free.bandwidths, &slowest).max(lo);

    let slope = |cs: &[Choice]| {
        let mut s = 1.0 - alpha;
        for (u, c) in cs.iter().enumerate() {
            s -= alpha * c.theta * prob.devices[u].payload_bits / (c.upload_time * c.upload_time);
        }
        s * g
    };

    let Some(mut best) = ctx.at_cap(hi) else {
        return Err(RadioError::Infeasible { devices: (0..m).collect(), reason: "no feasible latency cap".into() });
    };
    let s_hi = slope(&best);
    // Bisect until the lower end is feasible (feasibility is monotone in the
    // cap), then switch to regula falsi on the slope.
    let mut lo_slope = None;
    for _ in 0..100 {
        if hi - lo <= 1e-8 * hi || s_hi <= 0.0 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match ctx.at_cap(mid) {
            None => lo = mid,
            Some(cs) => {
                let s = slope(&cs);
                if s < 0.0 {
                    lo = mid;
                    lo_slope = Some(s);
                    break;
                }
                hi = mid;
                best = cs;
            }
        }
    }
    if let Some(s_lo) = lo_slope {
        let s_hi = slope(&best);
        if s_hi > 0.0 {
            let (_, b) = illinois(
                |cap| ctx.at_cap(cap).map_or(f64::NEG_INFINITY, |cs| slope(&cs)),
                lo,
                hi,
                s_lo,
                s_hi,
                1e-8,
            );
            if let Some(cs) = ctx.at_cap(b) {
                best = cs;
            }
        }
    }
    Ok((
        best.iter().map(|c| c.power).collect(),
        best.iter().map(|c| c.bandwidth).collect(),
        best.iter().map(|c| c.freq).collect(),
    ))
}
