//! Forward and backward passes over a `ModelSpec`.

use rand::Rng;

use super::layers::{self, ConvGeom};
use super::params::Params;
use super::spec::{LayerSpec, ModelSpec};
use crate::error::{CoreError, Result};
use crate::rng::stream;
use crate::tensor::Tensor;

/// Training mode draws dropout masks from a stream keyed by `(seed, step,
/// layer position)`; evaluation mode disables dropout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Train { seed: u64, step: u64 },
    Eval,
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    /// Dropout multipliers (0 or `1 / (1 - p)`).
    Mask(Vec<f64>),
    /// Max-pool winner indices.
    Argmax(Vec<u32>),
}

/// Everything a backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Tensor>,
    aux: Vec<Aux>,
    version: u64,
    first_layer: usize,
}

impl Trace {
    /// Input activation of each layer.
    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }
}

fn conv_geom(layer: &LayerSpec, input: &[usize], output: &[usize]) -> ConvGeom {
    let LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } = *layer else {
        unreachable!("conv_geom on a non-convolution layer")
    };
    ConvGeom {
        c: in_channels,
        h: input[1],
        w: input[2],
        co: out_channels,
        k: kernel,
        stride,
        pad: padding,
        ho: output[1],
        wo: output[2],
    }
}

fn batch_shape(batch: usize, per_sample: &[usize]) -> Vec<usize> {
    let mut s = vec![batch];
    s.extend_from_slice(per_sample);
    s
}

fn check_input(spec: &ModelSpec, x: &Tensor) -> Result<usize> {
    let shape = x.shape();
    if shape.len() != spec.input_shape().len() + 1 || &shape[1..] != spec.input_shape() {
        return Err(CoreError::Shape { expected: batch_shape(shape[0], spec.input_shape()), actual: shape.to_vec() });
    }
    Ok(shape[0])
}

/// Runs layer `i` on `x`, returning its output and any state backward needs.
fn layer_forward(spec: &ModelSpec, params: &Params, i: usize, x: &Tensor, mode: Mode) -> (Tensor, Aux) {
    let layer = &spec.layers()[i];
    let batch = x.rows();
    let (input, output) = (spec.shape_at(i), spec.shape_at(i + 1));
    let p = params.layer(i);
    let (data, aux) = match *layer {
        LayerSpec::Conv2d { .. } => {
            (layers::conv_forward(&conv_geom(layer, input, output), x.data(), &p.weight, &p.bias), Aux::None)
        }
        LayerSpec::Dense { fan_in, fan_out } => {
            (layers::dense_forward(x.data(), fan_in, fan_out, &p.weight, &p.bias), Aux::None)
        }
        LayerSpec::Relu => (layers::relu_forward(x.data()), Aux::None),
        LayerSpec::Dropout { p: drop } => match mode {
            Mode::Train { seed, step } if drop > 0.0 => {
                let keep = 1.0 / (1.0 - drop);
                let mut rng = stream(&[seed, step, (spec.first_layer() + i) as u64]);
                let mask: Vec<f64> =
                    (0..x.len()).map(|_| if rng.random::<f64>() < drop { 0.0 } else { keep }).collect();
                let y = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                (y, Aux::Mask(mask))
            }
            _ => (x.data().to_vec(), Aux::None),
        },
        LayerSpec::MaxPool2d { size } => {
            let (y, arg) = layers::maxpool_forward(x.data(), input[1], input[2], size);
            (y, Aux::Argmax(arg))
        }
        LayerSpec::Flatten => (x.data().to_vec(), Aux::None),
    };
    (Tensor::from_parts(batch_shape(batch, output), data), aux)
}

/// Forward pass keeping the activations needed by [`backward`]. Returns the
/// trace and the output (logits for a full model, the cut activation for a
/// client part).
pub fn forward(spec: &ModelSpec, params: &Params, x: &Tensor, mode: Mode) -> Result<(Trace, Tensor)> {
    check_input(spec, x)?;
    check_params(spec, params)?;
    let mut inputs = Vec::with_capacity(spec.len());
    let mut aux = Vec::with_capacity(spec.len());
    let mut cur = x.clone();
    for i in 0..spec.len() {
        let (next, a) = layer_forward(spec, params, i, &cur, mode);
        inputs.push(std::mem::replace(&mut cur, next));
        aux.push(a);
    }
    Ok((Trace { inputs, aux, version: params.version(), first_layer: spec.first_layer() }, cur))
}

/// Evaluation-mode forward pass without keeping activations.
pub fn infer(spec: &ModelSpec, params: &Params, x: &Tensor) -> Result<Tensor> {
    check_input(spec, x)?;
    check_params(spec, params)?;
    let mut cur = x.clone();
    for i in 0..spec.len() {
        cur = layer_forward(spec, params, i, &cur, Mode::Eval).0;
    }
    Ok(cur)
}

fn check_params(spec: &ModelSpec, params: &Params) -> Result<()> {
    let ok = params.layers().len() == spec.len()
        && spec.layers().iter().zip(params.layers()).all(|(l, p)| {
            let (w, b) = l.param_shape();
            p.weight.len() == w && p.bias.len() == b
        });
    if ok {
        Ok(())
    } else {
        Err(CoreError::domain("parameters do not match the model layout"))
    }
}

/// Back-propagates `dout` (gradient of the loss with respect to the forward
/// output). Returns parameter gradients and the gradient with respect to the
/// forward input.
pub fn backward(spec: &ModelSpec, params: &Params, trace: &Trace, dout: &Tensor) -> Result<(Params, Tensor)> {
    check_params(spec, params)?;
    if trace.version != params.version() || trace.first_layer != spec.first_layer() || trace.inputs.len() != spec.len() {
        return Err(CoreError::domain("trace does not belong to these parameters (stale or foreign)"));
    }
    let batch = dout.rows();
    let expected = batch_shape(batch, spec.output_shape());
    if dout.shape() != expected.as_slice() {
        return Err(CoreError::Shape { expected, actual: dout.shape().to_vec() });
    }
    if let Some(x0) = trace.inputs.first() {
        if x0.rows() != batch {
            return Err(CoreError::domain("gradient batch size differs from the traced batch"));
        }
    }
    let mut grads = Params::zeros(spec);
    let mut dy = dout.data().to_vec();
    for i in (0..spec.len()).rev() {
        let layer = &spec.layers()[i];
        let x = &trace.inputs[i];
        let (input, output) = (spec.shape_at(i), spec.shape_at(i + 1));
        let p = params.layer(i);
        dy = match (*layer, &trace.aux[i]) {
            (LayerSpec::Conv2d { .. }, _) => {
                let (dw, db, dx) = layers::conv_backward(&conv_geom(layer, input, output), x.data(), &dy, &p.weight);
                let g = grads.layer_mut(i);
                g.weight = dw;
                g.bias = db;
                dx
            }
            (LayerSpec::Dense { fan_in, fan_out }, _) => {
                let (dw, db, dx) = layers::dense_backward(x.data(), &dy, fan_in, fan_out, &p.weight);
                let g = grads.layer_mut(i);
                g.weight = dw;
                g.bias = db;
                dx
            }
            (LayerSpec::Relu, _) => layers::relu_backward(x.data(), &dy),
            (LayerSpec::Dropout { .. }, Aux::Mask(mask)) => dy.iter().zip(mask).map(|(d, m)| d * m).collect(),
            (LayerSpec::MaxPool2d { .. }, Aux::Argmax(arg)) => layers::maxpool_backward(x.len(), arg, &dy),
            _ => dy,
        };
    }
    Ok((grads, Tensor::from_parts(batch_shape(batch, spec.input_shape()), dy)))
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits.
pub fn cross_entropy(logits: &Tensor, labels: &[u8]) -> Result<(f64, Tensor)> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(CoreError::Shape { expected: vec![labels.len(), 2], actual: shape.to_vec() });
    }
    let (batch, classes) = (shape[0], shape[1]);
    if let Some(&bad) = labels.iter().find(|&&y| y as usize >= classes) {
        return Err(CoreError::domain(format!("label {bad} out of range for {classes} classes")));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; batch * classes];
    let inv = 1.0 / batch as f64;
    for (b, &y) in labels.iter().enumerate() {
        let z = &logits.data()[b * classes..(b + 1) * classes];
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += log_norm - z[y as usize];
        for (c, g) in grad[b * classes..(b + 1) * classes].iter_mut().enumerate() {
            let p = (z[c] - log_norm).exp();
            *g = (p - if c == y as usize { 1.0 } else { 0.0 }) * inv;
        }
    }
    Ok((loss * inv, Tensor::from_parts(shape.to_vec(), grad)))
}

/// Predicted class per row (lowest index wins ties).
pub fn argmax_rows(logits: &Tensor) -> Vec<u8> {
    let k = logits.row_len();
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}
