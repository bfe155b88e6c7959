//! The experiments behind each subcommand. Every command returns its
//! results as tables and writes them to the output directory; all runs
//! are pure functions of the configuration, so independent runs execute in
//! parallel without affecting the output.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use edgesplit_core::data::Dataset;
use edgesplit_core::fl::run_fl_training;
use edgesplit_core::nn::{model_flops, ModelSpec};
use edgesplit_core::rng::mix;
use edgesplit_core::sl::run_training;
use edgesplit_core::train::{RoundMetrics, WIRE_BYTES_PER_ELEMENT};
use edgesplit_radio::wireless::{dbm_to_watts, generate_topology};
use edgesplit_radio::{
    alternate_optimize, evaluate_objective, AllocationOptions, AllocationProblem, AllocationSolution, CapMode, DeviceProfile,
    RadioError, SystemParams,
};
use rayon::prelude::*;

use crate::config::{AllocatorConfig, ExperimentConfig};
use crate::csv::{Cell, Table};
use crate::prep::{client_shards, fed_config, fed_variants, model, prepare_data, sl_config};

const TAG_ALLOCATOR: u64 = 0xA110;

/// Columns shared by every per-round training table.
const ROUND_COLUMNS: [&str; 11] = [
    "round",
    "epoch",
    "loss",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "avg_client_sec",
    "total_client_tflops",
    "bytes_up",
    "bytes_down",
];

fn columns(prefix: &[&'static str], suffix: &[&'static str]) -> Vec<&'static str> {
    prefix.iter().chain(&ROUND_COLUMNS).chain(suffix).copied().collect()
}

fn round_cells(m: &RoundMetrics, local_epochs: usize) -> Vec<Cell> {
    vec![
        m.round.into(),
        (m.round * local_epochs).into(),
        m.loss.into(),
        m.accuracy.into(),
        m.precision.into(),
        m.recall.into(),
        m.f1.into(),
        m.avg_client_sec.into(),
        m.total_client_tflops.into(),
        m.bytes_up.into(),
        m.bytes_down.into(),
    ]
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(&cfg.out_dir)
}

/// Named tables ready to be written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub tables: Vec<(String, Table)>,
}

impl Output {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        self.tables
            .iter()
            .map(|(name, table)| {
                let path = dir.join(format!("{name}.csv"));
                table.write(&path)?;
                Ok(path)
            })
            .collect()
    }
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct Run {
    pub label: String,
    pub rows: Vec<RoundMetrics>,
}

impl Run {
    pub fn final_accuracy(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.accuracy)
    }
}

struct Prepared {
    spec: ModelSpec,
    shards: Vec<Dataset>,
    val: Dataset,
}

fn prepare(cfg: &ExperimentConfig, clients: usize) -> Result<Prepared> {
    let splits = prepare_data(cfg)?;
    Ok(Prepared { spec: model(cfg)?, shards: client_shards(cfg, &splits.train, clients)?, val: splits.val })
}

fn sl_run(cfg: &ExperimentConfig, p: &Prepared, cut: usize) -> Result<Vec<RoundMetrics>> {
    let sl = sl_config(cfg, cut, p.shards.len())?;
    log::info!("split learning: cut {cut}, {} clients, {} rounds", p.shards.len(), sl.rounds);
    let (rows, _) = run_training(&p.spec, p.shards.clone(), &p.val, sl).with_context(|| format!("split learning at cut {cut}"))?;
    Ok(rows)
}

/// Split learning against the three federated baselines on identical
/// shards, seeds and model initialisation.
pub fn compare(cfg: &ExperimentConfig) -> Result<(Output, Vec<Run>)> {
    let clients = cfg.training.clients;
    let p = prepare(cfg, clients)?;
    let cut = cfg.training.cut;
    let mut jobs: Vec<Option<_>> = vec![None];
    jobs.extend(fed_variants(cfg).into_iter().map(Some));
    let runs = jobs
        .into_par_iter()
        .map(|variant| match variant {
            None => Ok(Run { label: "sl".into(), rows: sl_run(cfg, &p, cut)? }),
            Some(v) => {
                log::info!("federated learning: {}, {clients} clients", v.name());
                let fc = fed_config(cfg, v, clients)?;
                let (rows, _) = run_fl_training(&p.spec, p.shards.clone(), &p.val, fc).with_context(|| format!("running {}", v.name()))?;
                Ok(Run { label: v.name().into(), rows })
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let epochs = cfg.training.local_epochs;
    let mut tables = Vec::new();
    for run in &runs {
        let (name, table) = if run.label == "sl" {
            let mut t = Table::new(&columns(&["cut"], &[]));
            for m in &run.rows {
                let mut row = vec![Cell::from(cut)];
                row.extend(round_cells(m, epochs));
                t.push(row)?;
            }
            ("sl_metrics".to_string(), t)
        } else {
            let mut t = Table::new(&columns(&["variant"], &[]));
            for m in &run.rows {
                let mut row = vec![Cell::from(run.label.as_str())];
                row.extend(round_cells(m, epochs));
                t.push(row)?;
            }
            (format!("fl_metrics_{}", run.label), t)
        };
        tables.push((name, table));
    }
    Ok((Output { tables }, runs))
}

/// Bytes of one full smashed batch at `cut`: activations plus labels.
pub fn smashed_bytes_per_batch(spec: &ModelSpec, cut: usize, batch_size: usize) -> u64 {
    let elements: usize = spec.shape_at(cut).iter().product();
    ((elements + 1) * batch_size) as u64 * WIRE_BYTES_PER_ELEMENT
}

/// Client forward-plus-backward FLOPs per sample for the first `cut` layers.
pub fn client_flops_per_sample(spec: &ModelSpec, cut: usize) -> Result<u64> {
    let (client, _) = spec.split(cut)?;
    Ok(model_flops(&client).total())
}

/// One split-learning run per cut position.
pub fn sweep_cut(cfg: &ExperimentConfig) -> Result<(Output, Vec<Run>)> {
    let p = prepare(cfg, cfg.training.clients)?;
    let runs = cfg
        .sweep
        .cuts
        .par_iter()
        .map(|&cut| Ok(Run { label: cut.to_string(), rows: sl_run(cfg, &p, cut)? }))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&columns(&["cut"], &["smashed_bytes_per_batch", "client_flops_per_sample"]));
    for (&cut, run) in cfg.sweep.cuts.iter().zip(&runs) {
        let smashed = smashed_bytes_per_batch(&p.spec, cut, cfg.training.batch_size);
        let flops = client_flops_per_sample(&p.spec, cut)?;
        for m in &run.rows {
            let mut row = vec![Cell::from(cut)];
            row.extend(round_cells(m, cfg.training.local_epochs));
            row.extend([Cell::from(smashed), Cell::from(flops)]);
            t.push(row)?;
        }
    }
    Ok((Output { tables: vec![("sweep_cut".into(), t)] }, runs))
}

/// One split-learning run per client count, on the same training split.
pub fn sweep_clients(cfg: &ExperimentConfig) -> Result<(Output, Vec<Run>)> {
    let splits = prepare_data(cfg)?;
    let spec = model(cfg)?;
    let cut = cfg.training.cut;
    let results = cfg
        .sweep
        .client_counts
        .par_iter()
        .map(|&k| {
            let p = Prepared { spec: spec.clone(), shards: client_shards(cfg, &splits.train, k)?, val: splits.val.clone() };
            let samples: usize = p.shards.iter().map(Dataset::len).sum();
            Ok((samples, Run { label: k.to_string(), rows: sl_run(cfg, &p, cut)? }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&columns(&["clients", "train_samples"], &["per_client_tflops"]));
    for (&k, (samples, run)) in cfg.sweep.client_counts.iter().zip(&results) {
        for m in &run.rows {
            let mut row = vec![Cell::from(k), Cell::from(*samples)];
            row.extend(round_cells(m, cfg.training.local_epochs));
            row.push(Cell::from(m.total_client_tflops / k as f64));
            t.push(row)?;
        }
    }
    let runs = results.into_iter().map(|(_, r)| r).collect();
    Ok((Output { tables: vec![("sweep_clients".into(), t)] }, runs))
}

/// The parameter varied by an allocation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    PowerMaxDbm,
    FreqMaxHz,
    BandwidthHz,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::PowerMaxDbm, Axis::FreqMaxHz, Axis::BandwidthHz];

    pub fn name(self) -> &'static str {
        match self {
            Axis::PowerMaxDbm => "power_max_dbm",
            Axis::FreqMaxHz => "freq_max_hz",
            Axis::BandwidthHz => "bandwidth_hz",
        }
    }

    fn values(self, a: &AllocatorConfig) -> &[f64] {
        match self {
            Axis::PowerMaxDbm => &a.power_max_dbm_sweep,
            Axis::FreqMaxHz => &a.freq_max_hz_sweep,
            Axis::BandwidthHz => &a.bandwidth_hz_sweep,
        }
    }
}

/// Limits that an allocation sweep point overrides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub power_max_dbm: f64,
    pub freq_max_hz: f64,
    pub bandwidth_hz: f64,
}

impl Limits {
    pub fn base(a: &AllocatorConfig) -> Self {
        Self { power_max_dbm: a.power_max_dbm, freq_max_hz: a.freq_max_hz, bandwidth_hz: a.total_bandwidth_hz }
    }

    fn with(mut self, axis: Axis, value: f64) -> Self {
        match axis {
            Axis::PowerMaxDbm => self.power_max_dbm = value,
            Axis::FreqMaxHz => self.freq_max_hz = value,
            Axis::BandwidthHz => self.bandwidth_hz = value,
        }
        self
    }
}

/// The allocation instance for the configured devices at the given limits
/// and energy weight. Device placement depends only on the seed.
pub fn allocation_problem(a: &AllocatorConfig, seed: u64, limits: Limits, weight: f64) -> Result<AllocationProblem> {
    let topo = generate_topology(a.devices, a.radius_m, mix(&[seed, TAG_ALLOCATOR]));
    let devices = topo
        .gains
        .iter()
        .enumerate()
        .map(|(id, &gain)| DeviceProfile {
            id,
            channel_gain: gain,
            power_min: dbm_to_watts(a.power_min_dbm),
            power_max: dbm_to_watts(limits.power_max_dbm),
            freq_min: a.freq_min_hz,
            freq_max: limits.freq_max_hz,
            cycles_per_sample: a.cycles_per_sample,
            dataset_size: a.dataset_size,
            payload_bits: a.payload_bits,
        })
        .collect();
    let sys = SystemParams {
        device_count: a.devices,
        noise_psd: dbm_to_watts(a.noise_psd_dbm_hz),
        capacitance: a.capacitance,
        local_iters: a.local_iters,
        global_rounds: a.global_rounds,
        weight,
        total_bandwidth: limits.bandwidth_hz,
    };
    Ok(AllocationProblem::new(devices, sys)?)
}

fn options(a: &AllocatorConfig) -> AllocationOptions {
    AllocationOptions { outer_tol: a.outer_tol, max_outer: a.max_outer, cap_mode: CapMode::Joint, coupled_step: true }
}

/// One point of an allocation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocRow {
    pub axis: Axis,
    pub value: f64,
    pub weight: f64,
    /// `(energy, time, objective)`; `None` when no feasible allocation was
    /// found.
    pub result: Option<(f64, f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    /// The previous point's allocation beat the fresh solve and was kept.
    pub carried: bool,
}

/// An allocation kept from an earlier sweep point.
struct Incumbent {
    powers: Vec<f64>,
    bandwidths: Vec<f64>,
    freqs: Vec<f64>,
}

impl Incumbent {
    fn from_solution(s: &AllocationSolution) -> Self {
        Self { powers: s.powers.clone(), bandwidths: s.bandwidths.clone(), freqs: s.freqs.clone() }
    }

    /// `(energy, time, objective)` under `prob`, or `None` if the
    /// allocation violates its constraints.
    fn score(&self, prob: &AllocationProblem) -> Option<(f64, f64, f64)> {
        let cap = prob.induced_cap(&self.powers, &self.bandwidths, &self.freqs);
        if prob.max_constraint_violation(&self.powers, &self.bandwidths, &self.freqs, cap) > 1e-9 {
            return None;
        }
        let (e, t) = prob.energy_and_time(&self.powers, &self.bandwidths, &self.freqs);
        Some((e, t, evaluate_objective(prob, &self.powers, &self.bandwidths, &self.freqs, cap)))
    }
}

/// Sweeps one limit in ascending order at a fixed weight. Raising a limit
/// only enlarges the feasible set, so the previous point's allocation stays
/// feasible; it is kept whenever it scores better than the fresh solve,
/// which makes the reported optimum non-increasing along the sweep.
pub fn allocation_series(a: &AllocatorConfig, seed: u64, axis: Axis, weight: f64) -> Result<Vec<AllocRow>> {
    let opts = options(a);
    let mut incumbent: Option<Incumbent> = None;
    let mut rows = Vec::new();
    for &value in axis.values(a) {
        let prob = allocation_problem(a, seed, Limits::base(a).with(axis, value), weight)?;
        let fresh = match alternate_optimize(&prob, &opts) {
            Ok(s) => Some(s),
            Err(RadioError::Infeasible { .. }) => None,
            Err(e) => return Err(anyhow!(e).context(format!("allocating at {} = {value}, weight {weight}", axis.name()))),
        };
        let fresh_score = fresh.as_ref().map(|s| (s.energy, s.time, s.objective));
        let carried_score = incumbent.as_ref().and_then(|inc| inc.score(&prob));
        let (result, carried) = match (fresh_score, carried_score) {
            (Some(f), Some(c)) if c.2 < f.2 => (Some(c), true),
            (Some(f), _) => (Some(f), false),
            (None, Some(c)) => (Some(c), true),
            (None, None) => (None, false),
        };
        if let (Some(s), false) = (&fresh, carried) {
            incumbent = Some(Incumbent::from_solution(s));
        }
        rows.push(AllocRow {
            axis,
            value,
            weight,
            result,
            iterations: fresh.as_ref().map_or(0, |s| s.iterations),
            converged: fresh.as_ref().is_some_and(|s| s.converged),
            carried,
        });
    }
    Ok(rows)
}

/// Energy/latency trade-off sweeps over the power, frequency and bandwidth
/// limits for every configured weight. Fails with an infeasibility error
/// if the base configuration itself admits no allocation.
pub fn allocate(cfg: &ExperimentConfig) -> Result<(Output, Vec<AllocRow>)> {
    let a = &cfg.allocator;
    let base = allocation_problem(a, cfg.seed, Limits::base(a), a.weights[0])?;
    alternate_optimize(&base, &options(a)).context("solving the base allocation problem")?;

    let series: Vec<(Axis, f64)> = Axis::ALL.iter().flat_map(|&axis| a.weights.iter().map(move |&w| (axis, w))).collect();
    let rows: Vec<AllocRow> = series
        .par_iter()
        .map(|&(axis, w)| {
            log::info!("allocation sweep over {} at weight {w}", axis.name());
            allocation_series(a, cfg.seed, axis, w)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut t = Table::new(&["axis", "value", "alpha", "energy", "time", "objective", "iterations", "converged", "carried", "infeasible"]);
    for r in &rows {
        let mut row = vec![Cell::from(r.axis.name()), Cell::from(r.value), Cell::from(r.weight)];
        match r.result {
            Some((e, tm, obj)) => row.extend([Cell::from(e), Cell::from(tm), Cell::from(obj)]),
            None => row.extend([Cell::Missing, Cell::Missing, Cell::Missing]),
        }
        row.extend([Cell::from(r.iterations), Cell::from(r.converged), Cell::from(r.carried), Cell::from(r.result.is_none())]);
        t.push(row)?;
    }
    Ok((Output { tables: vec![("allocate".into(), t)] }, rows))
}

/// Writes the prepared splits as `<split>_images.bin` (binary tensor) and
/// `<split>_labels.csv`.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let splits = prepare_data(cfg)?;
    let dir = out_dir(cfg)?;
    let mut written = Vec::new();
    for (name, ds) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        let images = dir.join(format!("{name}_images.bin"));
        let labels = dir.join(format!("{name}_labels.csv"));
        let open = |p: &Path| File::create(p).map(BufWriter::new).with_context(|| format!("creating {}", p.display()));
        ds.export(open(&images)?, open(&labels)?).with_context(|| format!("exporting the {name} split"))?;
        written.extend([images, labels]);
    }
    Ok(written)
}

/// Runs a table-producing command and writes its tables.
pub fn write_output(cfg: &ExperimentConfig, output: &Output) -> Result<Vec<PathBuf>> {
    output.write(out_dir(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smashed_bytes_match_the_cut_activation_size() {
        let spec = ModelSpec::desk_cnn();
        assert_eq!(smashed_bytes_per_batch(&spec, 4, 32), 262_272);
        assert_eq!(smashed_bytes_per_batch(&spec, 0, 1), (1024 + 1) * 4);
    }

    #[test]
    fn client_flops_grow_with_the_cut() {
        let spec = ModelSpec::desk_cnn();
        let f: Vec<u64> = [0, 4, 8, 12].iter().map(|&c| client_flops_per_sample(&spec, c).unwrap()).collect();
        assert_eq!(f[0], 0);
        assert!(f.windows(2).all(|w| w[0] < w[1]), "{f:?}");
    }

    #[test]
    fn allocation_series_is_monotone_on_a_small_instance() {
        let mut a = AllocatorConfig { devices: 4, ..AllocatorConfig::default() };
        a.weights = vec![0.5];
        for axis in Axis::ALL {
            let rows = allocation_series(&a, 3, axis, 0.5).unwrap();
            assert_eq!(rows.len(), 5);
            let objs: Vec<f64> = rows.iter().map(|r| r.result.unwrap().2).collect();
            assert!(objs.windows(2).all(|w| w[1] <= w[0]), "{axis:?}: {objs:?}");
        }
    }

    #[test]
    fn starved_bandwidth_still_yields_an_allocation() {
        let mut a = AllocatorConfig { devices: 3, ..AllocatorConfig::default() };
        a.bandwidth_hz_sweep = vec![1e3, 20e6];
        let rows = allocation_series(&a, 1, Axis::BandwidthHz, 0.5).unwrap();
        let times: Vec<f64> = rows.iter().map(|r| r.result.unwrap().1).collect();
        assert!(times.iter().all(|t| t.is_finite()) && times[0] > 10.0 * times[1], "{times:?}");
    }
}
