//! Trainable parameters, their initialisation and weighted averaging.

use rand::Rng;

use super::spec::{LayerSpec, ModelSpec};
use crate::error::{CoreError, Result};
use crate::rng::stream;
use crate::tensor::Tensor;

/// Weights and biases of one layer; both empty for parameter-free layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams {
    /// Row-major `[out, in, k, k]` for convolutions, `[out, in]` for dense.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// One `LayerParams` per layer of a `ModelSpec`. Also used for gradients.
///
/// `version` is bumped by every optimiser step so that activations recorded
/// before an update cannot be back-propagated through the updated weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    layers: Vec<LayerParams>,
    version: u64,
}

impl Params {
    /// Zero parameters shaped like `spec`.
    pub fn zeros(spec: &ModelSpec) -> Self {
        let layers = spec
            .layers()
            .iter()
            .map(|l| {
                let (w, b) = l.param_shape();
                LayerParams { weight: vec![0.0; w], bias: vec![0.0; b] }
            })
            .collect();
        Self { layers, version: 0 }
    }

    /// Fan-in scaled uniform initialisation: weights are drawn from
    /// `U(-1 / sqrt(fan_in), 1 / sqrt(fan_in))` and biases start at zero.
    /// The smaller-than-He bound keeps logits of order one at start despite
    /// the variance added by max pooling and inverted dropout.
    /// Each layer draws from its own stream keyed by its position in the
    /// whole model, so a split model initialises exactly like the
    /// corresponding slice of the unsplit one.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut params = Self::zeros(spec);
        for (i, (layer, p)) in spec.layers().iter().zip(&mut params.layers).enumerate() {
            let fan_in = match *layer {
                LayerSpec::Conv2d { in_channels, kernel, .. } => in_channels * kernel * kernel,
                LayerSpec::Dense { fan_in, .. } => fan_in,
                _ => continue,
            };
            let bound = (1.0 / fan_in as f64).sqrt();
            let mut rng = stream(&[seed, 0x1417, (spec.first_layer() + i) as u64]);
            for w in &mut p.weight {
                *w = rng.random_range(-bound..bound);
            }
        }
        params
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &LayerParams {
        &self.layers[i]
    }

    pub(crate) fn layer_mut(&mut self, i: usize) -> &mut LayerParams {
        &mut self.layers[i]
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// All parameter slices in layer order (weights before biases).
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }

    /// Every scalar in layer order.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().flatten().copied().collect()
    }

    /// Whether `other` has the same per-layer sizes.
    pub fn same_layout(&self, other: &Params) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.len() == b.weight.len() && a.bias.len() == b.bias.len())
    }

    /// Splits into the parameters of layers `0..cut` and `cut..`.
    pub fn split(&self, cut: usize) -> Result<(Params, Params)> {
        if cut > self.layers.len() {
            return Err(CoreError::domain(format!("cut {cut} exceeds layer count {}", self.layers.len())));
        }
        let head = Params { layers: self.layers[..cut].to_vec(), version: 0 };
        let tail = Params { layers: self.layers[cut..].to_vec(), version: 0 };
        Ok((head, tail))
    }

    pub fn concat(&self, next: &Params) -> Params {
        let mut layers = self.layers.clone();
        layers.extend(next.layers.iter().cloned());
        Params { layers, version: 0 }
    }

    /// `sum_k weights[k] * params[k]`, accumulated element-wise in the order
    /// given.
    pub fn weighted_sum(parts: &[(&Params, f64)]) -> Result<Params> {
        let (first, _) = parts.first().ok_or_else(|| CoreError::domain("nothing to aggregate"))?;
        if parts.iter().any(|(p, w)| !p.same_layout(first) || !w.is_finite()) {
            return Err(CoreError::domain("aggregated parameter sets differ in layout or weight"));
        }
        let sources: Vec<Vec<&[f64]>> = parts.iter().map(|(p, _)| p.slices().collect()).collect();
        let mut out = Params { layers: first.layers.clone(), version: 0 };
        for (s, dst) in out.slices_mut().enumerate() {
            for (j, x) in dst.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (src, (_, w)) in sources.iter().zip(parts) {
                    acc += w * src[s][j];
                }
                *x = acc;
            }
        }
        Ok(out)
    }

    /// Parameters as tensors (weight then bias for every parameterised
    /// layer), for the binary tensor format.
    pub fn to_tensors(&self, spec: &ModelSpec) -> Vec<Tensor> {
        let mut out = Vec::new();
        for (layer, p) in spec.layers().iter().zip(&self.layers) {
            let wshape = match *layer {
                LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                    vec![out_channels, in_channels, kernel, kernel]
                }
                LayerSpec::Dense { fan_in, fan_out } => vec![fan_out, fan_in],
                _ => continue,
            };
            out.push(Tensor::from_parts(wshape, p.weight.clone()));
            out.push(Tensor::from_parts(vec![p.bias.len()], p.bias.clone()));
        }
        out
    }

    pub fn from_tensors(spec: &ModelSpec, tensors: &[Tensor]) -> Result<Params> {
        let mut params = Params::zeros(spec);
        let mut it = tensors.iter();
        for p in &mut params.layers {
            if p.weight.is_empty() {
                continue;
            }
            for dst in [&mut p.weight, &mut p.bias] {
                let t = it.next().ok_or_else(|| CoreError::Format("too few tensors for the model".into()))?;
                if t.len() != dst.len() {
                    return Err(CoreError::Format(format!("tensor of {} elements for {} parameters", t.len(), dst.len())));
                }
                dst.copy_from_slice(t.data());
            }
        }
        if it.next().is_some() {
            return Err(CoreError::Format("more tensors than the model has parameters".into()));
        }
        Ok(params)
    }
}
