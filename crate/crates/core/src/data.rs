//! Synthetic two-class image data and the preparation pipeline: majority
//! down-sampling, stratified splitting, train-statistics normalisation and
//! client sharding.
//!
//! Benign images (label 0) are smooth random textures: a few low-frequency
//! sinusoids with Gaussian amplitudes plus pixel noise. Malware images
//! (label 1) are the same kind of texture with a small bright checkerboard
//! block stamped at a random position. The checkerboard phase (which of the
//! two cell parities is lit) is random with a fixed bias. A small CNN
//! detects either phase, while a linear model can only key on the dominant
//! one, so it misclassifies roughly the minority-phase malware images.
//!
//! Every fractional count is rounded half-up.

use std::f64::consts::PI;
use std::io::{BufRead, Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{CoreError, Result};
use crate::rng::stream;
use crate::tensor::Tensor;

/// Default checkerboard amplitude, chosen so the reference CNN separates
/// the classes almost perfectly.
pub const DEFAULT_SIGNAL: f64 = 1.0;

/// Default probability that a checkerboard lights the even cells rather
/// than the odd ones; it caps what a linear model can reach.
pub const DEFAULT_EVEN_PHASE: f64 = 0.85;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[N, 1, H, W]`.
    pub images: Tensor,
    /// 0 = benign, 1 = malware.
    pub labels: Vec<u8>,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    /// Fraction of label-1 samples.
    pub fn class_ratio(&self) -> f64 {
        self.positives() as f64 / self.len() as f64
    }

    /// The samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            seed: self.seed,
        }
    }

    /// Writes the images in the binary tensor format and the labels as a
    /// two-column CSV.
    pub fn export<W1: Write, W2: Write>(&self, images: W1, mut labels: W2) -> Result<()> {
        crate::tensor::write_tensors(images, std::slice::from_ref(&self.images))?;
        writeln!(labels, "index,label")?;
        for (i, y) in self.labels.iter().enumerate() {
            writeln!(labels, "{i},{y}")?;
        }
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::export`].
    pub fn import<R1: Read, R2: BufRead>(images: R1, labels: R2, seed: u64) -> Result<Dataset> {
        let mut tensors = crate::tensor::read_tensors(images)?;
        if tensors.len() != 1 || tensors[0].shape().len() != 4 || tensors[0].shape()[1] != 1 {
            return Err(CoreError::Format("expected a single [N, 1, H, W] image tensor".into()));
        }
        let images = tensors.remove(0);
        let mut out = Vec::with_capacity(images.rows());
        for (row, line) in labels.lines().enumerate() {
            let line = line?;
            if row == 0 {
                if line.trim() != "index,label" {
                    return Err(CoreError::Format(format!("unexpected label header {line:?}")));
                }
                continue;
            }
            let bad = || CoreError::Format(format!("bad label row {row}: {line:?}"));
            let (index, label) = line.split_once(',').ok_or_else(bad)?;
            if index.trim().parse::<usize>().ok() != Some(row - 1) {
                return Err(bad());
            }
            match label.trim() {
                "0" => out.push(0),
                "1" => out.push(1),
                _ => return Err(bad()),
            }
        }
        if out.len() != images.rows() {
            return Err(CoreError::Format(format!("{} labels for {} images", out.len(), images.rows())));
        }
        Ok(Dataset { images, labels: out, seed })
    }
}

/// `round(x)` with halves rounded up.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub minority_fraction: f64,
    /// Checkerboard amplitude for malware images.
    pub signal: f64,
    /// Probability that the checkerboard lights the even cells.
    pub even_phase: f64,
    pub seed: u64,
}

impl SynthParams {
    pub fn new(n: usize, height: usize, width: usize, minority_fraction: f64, seed: u64) -> Self {
        Self { n, height, width, minority_fraction, signal: DEFAULT_SIGNAL, even_phase: DEFAULT_EVEN_PHASE, seed }
    }
}

/// Generates `n` images with `round_half_up(n * minority_fraction)`
/// malware samples, shuffled.
pub fn generate(n: usize, height: usize, width: usize, minority_fraction: f64, seed: u64) -> Result<Dataset> {
    generate_with(&SynthParams::new(n, height, width, minority_fraction, seed))
}

pub fn generate_with(p: &SynthParams) -> Result<Dataset> {
    if p.n < 10 {
        return Err(CoreError::domain(format!("need at least 10 samples, got {}", p.n)));
    }
    if !(p.minority_fraction > 0.0 && p.minority_fraction <= 0.5) {
        return Err(CoreError::domain(format!("minority fraction {} outside (0, 0.5]", p.minority_fraction)));
    }
    if p.height < 4 || p.width < 4 || !(p.signal >= 0.0 && p.signal.is_finite()) {
        return Err(CoreError::domain("images must be at least 4x4 and the signal non-negative"));
    }
    if !(0.0..=1.0).contains(&p.even_phase) {
        return Err(CoreError::domain(format!("phase probability {} outside [0, 1]", p.even_phase)));
    }
    let positives = round_half_up(p.n as f64 * p.minority_fraction);
    let mut labels: Vec<u8> = (0..p.n).map(|i| u8::from(i < positives)).collect();
    labels.shuffle(&mut stream(&[p.seed, 0xDA7A, 0]));

    let (h, w) = (p.height, p.width);
    let mut data = Vec::with_capacity(p.n * h * w);
    for (i, &y) in labels.iter().enumerate() {
        let mut rng = stream(&[p.seed, 0xDA7A, 1, i as u64]);
        let img = texture(&mut rng, h, w);
        data.extend(img);
        if y == 1 {
            stamp_checkerboard(&mut rng, &mut data[i * h * w..], h, w, p.signal, p.even_phase);
        }
    }
    Ok(Dataset { images: Tensor::from_parts(vec![p.n, 1, h, w], data), labels, seed: p.seed })
}

/// Sum of four random low-frequency plane waves plus white noise.
fn texture(rng: &mut impl Rng, h: usize, w: usize) -> Vec<f64> {
    let amp = Normal::new(0.0, 0.5).unwrap();
    let noise = Normal::new(0.0, 0.1).unwrap();
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let fy = rng.random_range(-2.0..2.0) / h as f64;
            let fx = rng.random_range(-2.0..2.0) / w as f64;
            (amp.sample(rng), fy, fx, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let mut img = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut v = 0.0;
            for &(a, fy, fx, phase) in &waves {
                v += a * (2.0 * PI * (fy * y as f64 + fx * x as f64) + phase).cos();
            }
            img.push(v + noise.sample(rng));
        }
    }
    img
}

/// Adds a one-pixel checkerboard (`signal` on the cells of one parity, 0 on
/// the other; even parity with probability `even_phase`) in a
/// random block a quarter of the image wide.
fn stamp_checkerboard(rng: &mut impl Rng, img: &mut [f64], h: usize, w: usize, signal: f64, even_phase: f64) {
    let parity = usize::from(!rng.random_bool(even_phase));
    let (bh, bw) = ((h / 4).max(2), (w / 4).max(2));
    let y0 = rng.random_range(0..=h - bh);
    let x0 = rng.random_range(0..=w - bw);
    for y in y0..y0 + bh {
        for x in x0..x0 + bw {
            if (x + y) % 2 == parity {
                img[y * w + x] += signal;
            }
        }
    }
}

fn class_indices(ds: &Dataset) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &y) in ds.labels.iter().enumerate() {
        out[usize::from(y)].push(i);
    }
    out
}

/// Removes uniformly chosen majority samples until the minority makes up
/// at least `target_ratio` of the data. Kept samples stay in their
/// original order.
pub fn downsample_majority(ds: &Dataset, target_ratio: f64, seed: u64) -> Result<Dataset> {
    let classes = class_indices(ds);
    if classes.iter().any(Vec::is_empty) {
        return Err(CoreError::domain("down-sampling needs both classes present"));
    }
    if !(target_ratio > 0.0 && target_ratio < 1.0) {
        return Err(CoreError::domain(format!("target ratio {target_ratio} is unreachable")));
    }
    let (minor, major) =
        if classes[1].len() <= classes[0].len() { (&classes[1], &classes[0]) } else { (&classes[0], &classes[1]) };
    let m = minor.len() as f64;
    // Largest majority count with m / (m + k) >= target.
    let allowed = (m * (1.0 - target_ratio) / target_ratio + 1e-9).floor() as usize;
    if allowed == 0 {
        return Err(CoreError::domain(format!("target ratio {target_ratio} would remove the whole majority class")));
    }
    if major.len() <= allowed {
        return Ok(ds.clone());
    }
    let mut shuffled = major.clone();
    shuffled.shuffle(&mut stream(&[seed, 0xD055]));
    let mut keep: Vec<usize> = minor.iter().copied().chain(shuffled[..allowed].iter().copied()).collect();
    keep.sort_unstable();
    Ok(ds.subset(&keep))
}

/// Orders the dataset so that each class is shuffled and the classes are
/// interleaved in proportion: any contiguous run of the result holds each
/// class in its overall proportion, up to one sample.
fn stratified_order(ds: &Dataset, seed: u64) -> Vec<usize> {
    let mut classes = class_indices(ds);
    let mut keyed: Vec<(f64, u8, usize)> = Vec::with_capacity(ds.len());
    for (c, idx) in classes.iter_mut().enumerate() {
        idx.shuffle(&mut stream(&[seed, 0x5747, c as u64]));
        let n = idx.len() as f64;
        keyed.extend(idx.iter().enumerate().map(|(k, &i)| ((k as f64 + 0.5) / n, c as u8, i)));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

/// Stratified train/validation/test split. Split sizes are
/// `round_half_up(N * fraction)` for train and validation, with the rest
/// going to test; each split holds every class in its overall proportion to
/// within one sample.
pub fn stratified_split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CoreError::domain(format!("split fractions {fractions:?} must be positive and sum to 1")));
    }
    if class_indices(ds).iter().any(|c| c.len() < 3) {
        return Err(CoreError::domain("every class needs at least 3 samples to split"));
    }
    let n = ds.len();
    let n_train = round_half_up(n as f64 * fractions[0]);
    let n_val = round_half_up(n as f64 * fractions[1]).min(n - n_train);
    let order = stratified_order(ds, seed);
    let (train, rest) = order.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((ds.subset(train), ds.subset(val), ds.subset(test)))
}

/// Per-pixel statistics of a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at `1e-6`.
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(CoreError::domain("cannot normalise with an empty training split"));
        }
        let d = train.images.row_len();
        let n = train.len() as f64;
        let mut mean = vec![0.0; d];
        for row in train.images.data().chunks(d) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in train.images.data().chunks(d) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt().max(1e-6)).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let mut out = ds.clone();
        let d = self.mean.len();
        for row in out.images.data_mut().chunks_mut(d) {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        out
    }
}

/// Normalises `train` and every dataset in `others` with the training
/// split's per-pixel mean and standard deviation.
pub fn normalize(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>, NormStats)> {
    let stats = NormStats::fit(train)?;
    let rest = others.iter().map(|d| stats.apply(d)).collect();
    Ok((stats.apply(train), rest, stats))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShardMode {
    /// Equal shards with the class mix of the whole dataset.
    Stratified,
    /// Per-class client proportions drawn from `Dirichlet(beta)`.
    Dirichlet { beta: f64 },
}

/// Partitions `ds` among `n_clients`. Returns each client's sample indices.
pub fn shard_indices(ds: &Dataset, n_clients: usize, mode: ShardMode, seed: u64) -> Result<Vec<Vec<usize>>> {
    let classes = class_indices(ds);
    if n_clients == 0 {
        return Err(CoreError::domain("need at least one client"));
    }
    if classes.iter().filter(|c| !c.is_empty()).any(|c| c.len() < n_clients) {
        return Err(CoreError::domain(format!("{n_clients} clients exceed a class count {:?}", classes.each_ref().map(Vec::len))));
    }
    let mut shards = vec![Vec::new(); n_clients];
    match mode {
        ShardMode::Stratified => {
            // Deal each shuffled class in turn, continuing the rotation, so
            // shard sizes and per-class counts differ by at most one.
            let mut k = 0;
            for (c, idx) in classes.iter().enumerate() {
                let mut idx = idx.clone();
                idx.shuffle(&mut stream(&[seed, 0x5A4D, c as u64]));
                for i in idx {
                    shards[k % n_clients].push(i);
                    k += 1;
                }
            }
            for s in &mut shards {
                s.sort_unstable();
            }
        }
        ShardMode::Dirichlet { beta } => {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(CoreError::domain(format!("Dirichlet concentration {beta} must be positive")));
            }
            let gamma = Gamma::new(beta, 1.0).map_err(|e| CoreError::domain(e.to_string()))?;
            for (c, idx) in classes.iter().enumerate() {
                let mut rng = stream(&[seed, 0xD1C7, c as u64]);
                let mut idx = idx.clone();
                idx.shuffle(&mut rng);
                let draws: Vec<f64> = (0..n_clients).map(|_| gamma.sample(&mut rng)).collect();
                let total: f64 = draws.iter().sum();
                // Cumulative half-up rounding keeps counts summing exactly.
                let mut cum = 0.0;
                let mut start = 0;
                for (u, d) in draws.iter().enumerate() {
                    cum += d / total;
                    let end = if u + 1 == n_clients { idx.len() } else { round_half_up(cum * idx.len() as f64).min(idx.len()) };
                    shards[u].extend_from_slice(&idx[start..end.max(start)]);
                    start = end.max(start);
                }
            }
            for s in &mut shards {
                s.sort_unstable();
            }
        }
    }
    Ok(shards)
}

pub fn shard(ds: &Dataset, n_clients: usize, mode: ShardMode, seed: u64) -> Result<Vec<Dataset>> {
    Ok(shard_indices(ds, n_clients, mode, seed)?.iter().map(|idx| ds.subset(idx)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(ds: &Dataset) -> (usize, usize) {
        (ds.len() - ds.positives(), ds.positives())
    }

    fn labelled(neg: usize, pos: usize) -> Dataset {
        let n = neg + pos;
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i >= neg)).collect();
        let images = Tensor::from_parts(vec![n, 1, 1, 1], (0..n).map(|i| i as f64).collect());
        Dataset { images, labels, seed: 0 }
    }

    #[test]
    fn minority_count_rounds_half_up() {
        let ds = generate(1000, 8, 8, 0.1444, 1).unwrap();
        assert_eq!(ds.positives(), 144);
        let ds = generate(1000, 8, 8, 0.1445, 1).unwrap();
        assert_eq!(ds.positives(), 145);
        let ds = generate(100, 8, 8, 0.5, 1).unwrap();
        assert_eq!(counts(&ds), (50, 50));
        assert!(generate(9, 8, 8, 0.2, 1).is_err());
        assert!(generate(100, 8, 8, 0.0, 1).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(50, 16, 16, 0.2, 3).unwrap();
        let b = generate(50, 16, 16, 0.2, 3).unwrap();
        let c = generate(50, 16, 16, 0.2, 4).unwrap();
        let bits = |d: &Dataset| d.images.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.labels, b.labels);
        assert_ne!(bits(&a), bits(&c));
        assert!(a.images.all_finite());
    }

    #[test]
    fn downsampling_examples() {
        let ds = downsample_majority(&labelled(100, 50), 0.5, 1).unwrap();
        assert_eq!(counts(&ds), (50, 50));
        let ds = downsample_majority(&labelled(855, 145), 0.5, 1).unwrap();
        assert_eq!(counts(&ds), (145, 145));
        let balanced = labelled(40, 40);
        assert_eq!(downsample_majority(&balanced, 0.5, 1).unwrap(), balanced);
        assert!(downsample_majority(&labelled(10, 0), 0.5, 1).is_err());
        assert!(downsample_majority(&labelled(10, 5), 1.0, 1).is_err());
        // Minority samples are untouched.
        let ds = downsample_majority(&labelled(30, 10), 0.25, 2).unwrap();
        assert_eq!(counts(&ds), (30, 10));
        let ds = downsample_majority(&labelled(300, 10), 0.25, 2).unwrap();
        assert_eq!(counts(&ds), (30, 10));
        assert!(ds.images.data()[30..].iter().all(|&x| x >= 300.0));
    }

    #[test]
    fn split_sizes_and_stratification() {
        let ds = labelled(500, 500);
        let (tr, va, te) = stratified_split(&ds, [0.7, 0.15, 0.15], 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (700, 150, 150));
        let ds = labelled(70, 30);
        let (tr, va, te) = stratified_split(&ds, [0.7, 0.15, 0.15], 1).unwrap();
        for part in [&tr, &va, &te] {
            let expected = 0.3 * part.len() as f64;
            assert!((part.positives() as f64 - expected).abs() <= 1.0, "{} of {}", part.positives(), part.len());
        }
        assert!(stratified_split(&labelled(10, 2), [0.7, 0.15, 0.15], 1).is_err());
        assert!(stratified_split(&ds, [0.7, 0.2, 0.2], 1).is_err());
    }

    #[test]
    fn splits_partition_the_source() {
        let ds = labelled(137, 61);
        let (tr, va, te) = stratified_split(&ds, [0.7, 0.15, 0.15], 9).unwrap();
        let mut all: Vec<u64> = [&tr, &va, &te].iter().flat_map(|d| d.images.data().iter().map(|&x| x as u64)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..198).collect::<Vec<_>>());
    }

    #[test]
    fn normalisation_uses_train_statistics() {
        let ds = generate(200, 8, 8, 0.3, 5).unwrap();
        let (tr, va, te) = stratified_split(&ds, [0.7, 0.15, 0.15], 1).unwrap();
        let (ntr, rest, stats) = normalize(&tr, &[&va, &te]).unwrap();
        let d = 64;
        for px in 0..d {
            let col: Vec<f64> = ntr.images.data().iter().skip(px).step_by(d).copied().collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-10, "pixel {px} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
        // Validation data is shifted by the train mean, not its own.
        let own = NormStats::fit(&va).unwrap();
        assert_ne!(own.mean, stats.mean);
        assert_eq!(rest[0], stats.apply(&va));
    }

    #[test]
    fn constant_images_normalise_to_zero() {
        let mut ds = labelled(5, 5);
        ds.images.data_mut().fill(0.0);
        let (n, _, stats) = normalize(&ds, &[]).unwrap();
        assert!(stats.std.iter().all(|&s| s == 1e-6));
        assert!(n.images.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn stratified_shards_are_balanced_partitions() {
        let ds = labelled(50, 50);
        let shards = shard_indices(&ds, 2, ShardMode::Stratified, 3).unwrap();
        assert_eq!(shards[0].len(), 50);
        assert_eq!(shards[1].len(), 50);
        for s in &shards {
            let pos = s.iter().filter(|&&i| ds.labels[i] == 1).count();
            assert!((pos as i64 - 25).abs() <= 1);
        }
        let mut all: Vec<usize> = shards.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(shard_indices(&labelled(50, 3), 4, ShardMode::Stratified, 3).is_err());
    }

    #[test]
    fn dirichlet_shards_partition_and_approach_uniform() {
        let ds = labelled(400, 200);
        // Share of each class a client receives, against the stratified 1/4.
        let mut worst: f64 = 0.0;
        let mut mean_rel = 0.0;
        for seed in 0..20 {
            let shards = shard_indices(&ds, 4, ShardMode::Dirichlet { beta: 1e3 }, seed).unwrap();
            let mut all: Vec<usize> = shards.concat();
            all.sort_unstable();
            assert_eq!(all, (0..600).collect::<Vec<_>>());
            for s in &shards {
                for (c, total) in [(0u8, 400.0), (1u8, 200.0)] {
                    let got = s.iter().filter(|&&i| ds.labels[i] == c).count() as f64;
                    worst = worst.max((got / total - 0.25).abs());
                    mean_rel += (got - total / 4.0).abs() / (total / 4.0) / 160.0;
                }
            }
        }
        assert!(worst < 0.05, "largest per-class share deviation {worst}");
        assert!(mean_rel < 0.05, "mean relative deviation {mean_rel}");
        // A small concentration gives visibly skewed shards.
        let skewed = shard_indices(&ds, 4, ShardMode::Dirichlet { beta: 0.1 }, 1).unwrap();
        let sizes: Vec<usize> = skewed.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() > 50, "{sizes:?}");
    }

    #[test]
    fn export_writes_tensor_and_label_csv() {
        let ds = generate(10, 4, 4, 0.2, 1).unwrap();
        let (mut img, mut lab) = (Vec::new(), Vec::new());
        ds.export(&mut img, &mut lab).unwrap();
        let back = crate::tensor::read_tensors(&img[..]).unwrap();
        assert_eq!(back[0], ds.images);
        let text = String::from_utf8(lab).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("index,label\n0,"));
        assert_eq!(Dataset::import(&img[..], text.as_bytes(), 1).unwrap(), ds);
        assert!(Dataset::import(&img[..], "index,label\n0,1\n".as_bytes(), 1).is_err());
        assert!(Dataset::import(&img[..], text.replace(",1\n", ",7\n").as_bytes(), 1).is_err());
    }
}
