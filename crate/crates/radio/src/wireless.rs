//! Physical-layer and local-computation cost model.
//!
//! Uplink is FDMA: device `u` gets a slice `b_u` of the band and achieves
//! `b_u * log2(1 + rho_u * gamma_u / (N0 * b_u))` bits/s, where `N0` is the
//! noise power spectral density (W/Hz), so `N0 * b_u` is the in-band noise
//! power. Every quantity in this module is in linear SI units; dB and dBm
//! values are converted once with the helpers below.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{RadioError, Result};

/// Thermal noise density used by default, in dBm/Hz.
pub const DEFAULT_NOISE_PSD_DBM_HZ: f64 = -174.0;
/// Effective switched capacitance used by default (J·s²/cycle³).
pub const DEFAULT_CAPACITANCE: f64 = 1e-28;
/// CPU cycles needed per training sample by default.
pub const DEFAULT_CYCLES_PER_SAMPLE: f64 = 2e4;
/// Devices closer than this (metres) are clamped to it.
pub const MIN_DISTANCE_M: f64 = 1.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Noise power (W) over `bandwidth` Hz for a density given in W/Hz.
pub fn noise_power(noise_psd: f64, bandwidth: f64) -> f64 {
    noise_psd * bandwidth
}

/// Distance-dependent path loss in dB: `128.1 + 37.6 log10(d_km)`.
pub fn path_loss_db(distance_m: f64) -> f64 {
    let d_km = distance_m.max(MIN_DISTANCE_M) / 1000.0;
    128.1 + 37.6 * d_km.log10()
}

/// Linear power gain for a device at `distance_m`.
pub fn channel_gain(distance_m: f64) -> f64 {
    db_to_linear(-path_loss_db(distance_m))
}

/// Per-device radio and compute parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceProfile {
    pub id: usize,
    /// Linear channel power gain.
    pub channel_gain: f64,
    /// Transmit power bounds (W).
    pub power_min: f64,
    pub power_max: f64,
    /// CPU frequency bounds (cycles/s).
    pub freq_min: f64,
    pub freq_max: f64,
    pub cycles_per_sample: f64,
    /// Local dataset size (samples).
    pub dataset_size: u64,
    /// Uplink payload per global round (bits).
    pub payload_bits: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        let id = self.id;
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(RadioError::domain(format!("device {id}: {what}")))
            }
        };
        check(self.channel_gain.is_finite() && self.channel_gain > 0.0, "channel gain must be positive")?;
        check(
            self.power_min > 0.0 && self.power_min <= self.power_max && self.power_max.is_finite(),
            "require 0 < power_min <= power_max",
        )?;
        check(
            self.freq_min > 0.0 && self.freq_min <= self.freq_max && self.freq_max.is_finite(),
            "require 0 < freq_min <= freq_max",
        )?;
        check(self.cycles_per_sample.is_finite() && self.cycles_per_sample > 0.0, "cycles per sample must be positive")?;
        check(self.dataset_size >= 1, "dataset must hold at least one sample")?;
        check(self.payload_bits.is_finite() && self.payload_bits > 0.0, "payload must be positive")?;
        Ok(())
    }

    /// CPU cycles spent per global round: `L * chi_u * D_u`.
    pub fn cycles_per_round(&self, local_iters: u32) -> f64 {
        local_iters as f64 * self.cycles_per_sample * self.dataset_size as f64
    }
}

/// Constants shared by all devices.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub device_count: usize,
    /// Noise power spectral density (W/Hz).
    pub noise_psd: f64,
    /// Effective switched capacitance.
    pub capacitance: f64,
    pub local_iters: u32,
    pub global_rounds: u32,
    /// Energy weight; latency gets `1 - weight`.
    pub weight: f64,
    /// Total uplink bandwidth (Hz).
    pub total_bandwidth: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if self.device_count < 1 {
            return Err(RadioError::domain("need at least one device"));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(RadioError::domain(format!("weight {} outside [0, 1]", self.weight)));
        }
        if !(self.total_bandwidth.is_finite() && self.total_bandwidth > 0.0) {
            return Err(RadioError::domain("total bandwidth must be positive"));
        }
        if !(self.noise_psd.is_finite() && self.noise_psd > 0.0) {
            return Err(RadioError::domain("noise PSD must be positive"));
        }
        if !(self.capacitance.is_finite() && self.capacitance > 0.0) {
            return Err(RadioError::domain("capacitance must be positive"));
        }
        if self.local_iters < 1 || self.global_rounds < 1 {
            return Err(RadioError::domain("local iterations and global rounds must be >= 1"));
        }
        Ok(())
    }

    pub fn rounds(&self) -> f64 {
        self.global_rounds as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerRoundCosts {
    pub rate: f64,
    pub uplink_time: f64,
    pub tx_energy: f64,
    pub compute_time: f64,
    pub compute_energy: f64,
}

impl PerRoundCosts {
    pub fn round_time(&self) -> f64 {
        self.compute_time + self.uplink_time
    }

    pub fn round_energy(&self) -> f64 {
        self.tx_energy + self.compute_energy
    }
}

/// Device placement around the server and the resulting channel gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub positions: Vec<(f64, f64)>,
    pub distances: Vec<f64>,
    pub gains: Vec<f64>,
}

/// Shannon rate without argument checks; `snr_coeff = gamma / N0`.
#[inline]
pub(crate) fn rate_unchecked(bandwidth: f64, power: f64, snr_coeff: f64) -> f64 {
    let snr = power * snr_coeff / bandwidth;
    bandwidth * snr.ln_1p() / std::f64::consts::LN_2
}

/// Achievable uplink rate in bits/s. `noise_psd` is in W/Hz.
pub fn uplink_rate(bandwidth: f64, power: f64, gain: f64, noise_psd: f64) -> Result<f64> {
    for (name, v) in [("bandwidth", bandwidth), ("power", power), ("gain", gain), ("noise PSD", noise_psd)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(RadioError::domain(format!("uplink rate needs positive {name}, got {v}")));
        }
    }
    Ok(rate_unchecked(bandwidth, power, gain / noise_psd))
}

/// Rate, energy and time spent by one device in one global round.
pub fn per_round_costs(
    dev: &DeviceProfile,
    sys: &SystemParams,
    power: f64,
    bandwidth: f64,
    freq: f64,
) -> Result<PerRoundCosts> {
    if !(freq.is_finite() && freq > 0.0) {
        return Err(RadioError::domain(format!("device {}: CPU frequency must be positive", dev.id)));
    }
    let rate = uplink_rate(bandwidth, power, dev.channel_gain, sys.noise_psd)
        .map_err(|e| RadioError::domain(format!("device {}: {e}", dev.id)))?;
    if rate <= 0.0 {
        return Err(RadioError::domain(format!("device {}: zero uplink rate", dev.id)));
    }
    let uplink_time = dev.payload_bits / rate;
    let cycles = dev.cycles_per_round(sys.local_iters);
    Ok(PerRoundCosts {
        rate,
        uplink_time,
        tx_energy: power * uplink_time,
        compute_time: cycles / freq,
        compute_energy: sys.capacitance * cycles * freq * freq,
    })
}

/// Total energy and completion time over `rounds` global rounds.
pub fn totals(costs: &[PerRoundCosts], rounds: u32) -> Result<(f64, f64)> {
    if costs.is_empty() {
        return Err(RadioError::domain("totals over an empty device set"));
    }
    let g = rounds as f64;
    let energy: f64 = costs.iter().map(PerRoundCosts::round_energy).sum();
    let time = costs.iter().map(PerRoundCosts::round_time).fold(f64::NEG_INFINITY, f64::max);
    Ok((g * energy, g * time))
}

/// Smallest rate that lets the device finish a round within `cap` seconds
/// when computing at `freq`.
pub fn min_rate(dev: &DeviceProfile, sys: &SystemParams, cap: f64, freq: f64) -> Result<f64> {
    let slack = cap - dev.cycles_per_round(sys.local_iters) / freq;
    if !(slack > 0.0) {
        return Err(RadioError::Infeasible {
            devices: vec![dev.id],
            reason: format!("latency cap {cap} s leaves no time to transmit"),
        });
    }
    Ok(dev.payload_bits / slack)
}

/// Places `count` devices uniformly in a disk of `radius_m` around the
/// server and derives their gains from the path-loss model.
pub fn generate_topology(count: usize, radius_m: f64, seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(count);
    let mut distances = Vec::with_capacity(count);
    let mut gains = Vec::with_capacity(count);
    for _ in 0..count {
        let r = radius_m * rng.random::<f64>().sqrt();
        let angle = std::f64::consts::TAU * rng.random::<f64>();
        let (x, y) = (r * angle.cos(), r * angle.sin());
        let d = x.hypot(y).max(MIN_DISTANCE_M);
        positions.push((x, y));
        distances.push(d);
        gains.push(channel_gain(d));
    }
    Topology { positions, distances, gains }
}
