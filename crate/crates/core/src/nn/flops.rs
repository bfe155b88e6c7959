//! Floating-point operation counts per sample.
//!
//! Convention: a multiply-add is 2 FLOPs, so a convolution costs
//! `2 k^2 C_in C_out H_out W_out` and a dense layer `2 fan_in fan_out`.
//! ReLU and dropout cost one operation per element, max pooling one per
//! input element, flatten nothing. The backward pass of a parameterised
//! layer costs twice its forward pass (input and weight gradients); other
//! layers cost the same as forward.

use super::spec::{LayerSpec, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopCount {
    pub forward: u64,
    pub backward: u64,
}

impl FlopCount {
    pub fn total(&self) -> u64 {
        self.forward + self.backward
    }
}

impl std::ops::Add for FlopCount {
    type Output = FlopCount;

    fn add(self, rhs: FlopCount) -> FlopCount {
        FlopCount { forward: self.forward + rhs.forward, backward: self.backward + rhs.backward }
    }
}

impl std::iter::Sum for FlopCount {
    fn sum<I: Iterator<Item = FlopCount>>(iter: I) -> FlopCount {
        iter.fold(FlopCount::default(), |a, b| a + b)
    }
}

/// Per-layer, per-sample counts.
pub fn count_flops(spec: &ModelSpec) -> Vec<FlopCount> {
    spec.layers()
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let input: u64 = spec.shape_at(i).iter().product::<usize>() as u64;
            let output: u64 = spec.shape_at(i + 1).iter().product::<usize>() as u64;
            let forward = match *layer {
                LayerSpec::Conv2d { in_channels, kernel, .. } => 2 * (kernel * kernel * in_channels) as u64 * output,
                LayerSpec::Dense { fan_in, fan_out } => 2 * (fan_in * fan_out) as u64,
                LayerSpec::Relu | LayerSpec::Dropout { .. } => output,
                LayerSpec::MaxPool2d { .. } => input,
                LayerSpec::Flatten => 0,
            };
            let backward = if layer.has_params() { 2 * forward } else { forward };
            FlopCount { forward, backward }
        })
        .collect()
}

/// Whole-model per-sample count.
pub fn model_flops(spec: &ModelSpec) -> FlopCount {
    count_flops(spec).into_iter().sum()
}
