//! Exhaustive grid search over power, bandwidth and frequency.
//!
//! Power and frequency use `n` evenly spaced points between their bounds
//! (inclusive). Bandwidth uses `n` points on `[0, b_total]` for all but the
//! last device, which receives the remainder; zero-bandwidth points are
//! skipped. Refining `n` to `2n - 1` therefore yields a superset grid.
//!
//! For each bandwidth split the search is exact over the `(rho, phi)`
//! product without enumerating it: each device's candidates are sorted by
//! round time with a running minimum of energy, and every candidate time is
//! tried as the latency cap.

use super::{AllocationProblem, AllocationSolution};
use crate::error::{RadioError, Result};

/// Largest instance the oracle accepts.
pub const MAX_ORACLE_DEVICES: usize = 3;

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![lo];
    }
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Candidate `(time, energy, power index, freq index)` for one device,
/// sorted by time with a prefix minimum over energy.
struct Frontier {
    times: Vec<f64>,
    best_energy: Vec<f64>,
    best_choice: Vec<(usize, usize)>,
}

impl Frontier {
    fn build(prob: &AllocationProblem, u: usize, bandwidth: f64, powers: &[f64], freqs: &[f64]) -> Self {
        let dev = &prob.devices[u];
        let alpha_g = prob.sys.weight * prob.sys.rounds();
        let c = prob.cycles(u);
        let mut cands: Vec<(f64, f64, usize, usize)> = Vec::with_capacity(powers.len() * freqs.len());
        for (i, &p) in powers.iter().enumerate() {
            let rate = prob.rate(u, p, bandwidth);
            let t_ul = dev.payload_bits / rate;
            for (j, &f) in freqs.iter().enumerate() {
                let time = c / f + t_ul;
                let energy = alpha_g * (p * t_ul + prob.sys.capacitance * c * f * f);
                cands.push((time, energy, i, j));
            }
        }
        // Stable sort keeps grid order among equal times.
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times = Vec::with_capacity(cands.len());
        let mut best_energy = Vec::with_capacity(cands.len());
        let mut best_choice = Vec::with_capacity(cands.len());
        let mut run = (f64::INFINITY, (0, 0));
        for (t, e, i, j) in cands {
            if e < run.0 {
                run = (e, (i, j));
            }
            times.push(t);
            best_energy.push(run.0);
            best_choice.push(run.1);
        }
        Self { times, best_energy, best_choice }
    }

    /// Cheapest candidate finishing within `cap`.
    fn within(&self, cap: f64) -> Option<usize> {
        let n = self.times.partition_point(|&t| t <= cap);
        n.checked_sub(1)
    }
}

pub fn brute_force_allocate(prob: &AllocationProblem, n: usize) -> Result<AllocationSolution> {
    let m = prob.len();
    if m > MAX_ORACLE_DEVICES {
        return Err(RadioError::TooLarge { devices: m, max: MAX_ORACLE_DEVICES });
    }
    if n < 2 {
        return Err(RadioError::domain(format!("grid needs at least 2 points per axis, got {n}")));
    }
    let b_total = prob.sys.total_bandwidth;
    let power_axes: Vec<Vec<f64>> = prob.devices.iter().map(|d| linspace(d.power_min, d.power_max, n)).collect();
    let freq_axes: Vec<Vec<f64>> = prob.devices.iter().map(|d| linspace(d.freq_min, d.freq_max, n)).collect();
    let b_axis = linspace(0.0, b_total, n);
    let latency_price = (1.0 - prob.sys.weight) * prob.sys.rounds();

    // Bandwidth splits in lexicographic grid order; the last device takes
    // the remainder.
    let free = m.saturating_sub(1);
    let mut splits: Vec<Vec<f64>> = Vec::new();
    if m == 1 {
        splits.extend(b_axis.iter().map(|&b| vec![b]));
    } else {
        for code in 0..n.pow(free as u32) {
            let mut b = vec![0.0; m];
            let mut rest = code;
            for u in (0..free).rev() {
                b[u] = b_axis[rest % n];
                rest /= n;
            }
            b[m - 1] = b_total - b[..free].iter().sum::<f64>();
            splits.push(b);
        }
    }
    splits.retain(|b| b.iter().all(|&x| x > 0.0));

    let mut best: Option<(f64, Vec<f64>, Vec<(usize, usize)>)> = None;
    for b in &splits {
        let fronts: Vec<Frontier> =
            (0..m).map(|u| Frontier::build(prob, u, b[u], &power_axes[u], &freq_axes[u])).collect();
        for front in &fronts {
            for &cap in &front.times {
                let mut energy = 0.0;
                let mut choice = Vec::with_capacity(m);
                let mut ok = true;
                for f in &fronts {
                    match f.within(cap) {
                        Some(k) => {
                            energy += f.best_energy[k];
                            choice.push(f.best_choice[k]);
                        }
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                let value = energy + latency_price * cap;
                if best.as_ref().is_none_or(|(v, _, _)| value < *v) {
                    best = Some((value, b.clone(), choice));
                }
            }
        }
    }

    let (_, bandwidths, choice) =
        best.ok_or_else(|| RadioError::domain("grid contains no point with positive bandwidth for every device"))?;
    let powers = (0..m).map(|u| power_axes[u][choice[u].0]).collect();
    let freqs = (0..m).map(|u| freq_axes[u][choice[u].1]).collect();
    Ok(AllocationSolution::from_point(prob, powers, bandwidths, freqs))
}
