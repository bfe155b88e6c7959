//! Layer and model descriptions, shape inference and splitting.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    /// 2-D convolution over `[C, H, W]` inputs with square kernels.
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    Relu,
    /// Inverted dropout: kept activations are scaled by `1 / (1 - p)`.
    Dropout { p: f64 },
    /// Non-overlapping max pooling with a `size x size` window.
    MaxPool2d { size: usize },
    Flatten,
    Dense { fan_in: usize, fan_out: usize },
}

impl LayerSpec {
    /// 3x3 convolution with stride 1 and padding 1.
    pub fn conv3x3(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv2d { in_channels, out_channels, kernel: 3, stride: 1, padding: 1 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    /// `(weight count, bias count)`.
    pub fn param_shape(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                (out_channels * in_channels * kernel * kernel, out_channels)
            }
            LayerSpec::Dense { fan_in, fan_out } => (fan_in * fan_out, fan_out),
            _ => (0, 0),
        }
    }

    pub fn param_count(&self) -> usize {
        let (w, b) = self.param_shape();
        w + b
    }

    pub fn has_params(&self) -> bool {
        self.param_count() > 0
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |why: &str| CoreError::domain(format!("{} cannot take input {input:?}: {why}", self.name()));
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                let &[c, h, w] = input else { return Err(bad("expected [C, H, W]")) };
                if c != in_channels {
                    return Err(bad("channel count differs"));
                }
                if kernel == 0 || stride == 0 || out_channels == 0 {
                    return Err(bad("kernel, stride and channels must be positive"));
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(bad("kernel larger than padded input"));
                }
                let ho = (h + 2 * padding - kernel) / stride + 1;
                let wo = (w + 2 * padding - kernel) / stride + 1;
                Ok(vec![out_channels, ho, wo])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(bad("drop probability must lie in [0, 1)"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::MaxPool2d { size } => {
                let &[c, h, w] = input else { return Err(bad("expected [C, H, W]")) };
                if size == 0 || h < size || w < size {
                    return Err(bad("window larger than input"));
                }
                Ok(vec![c, h / size, w / size])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { fan_in, fan_out } => {
                if input != [fan_in] {
                    return Err(bad("expected a flat vector of fan_in features"));
                }
                if fan_out == 0 {
                    return Err(bad("fan_out must be positive"));
                }
                Ok(vec![fan_out])
            }
        }
    }
}

/// An ordered stack of layers with a fixed per-sample input shape.
///
/// `first_layer` is the position of `layers[0]` in the model this spec was
/// split from (0 for a whole model); it keys per-layer randomness so that a
/// split model behaves exactly like the corresponding slice of the whole.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    layers: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    first_layer: usize,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the
    /// output shape.
    shapes: Vec<Vec<usize>>,
}

impl ModelSpec {
    pub fn new(layers: Vec<LayerSpec>, input_shape: Vec<usize>) -> Result<Self> {
        Self::with_offset(layers, input_shape, 0)
    }

    fn with_offset(layers: Vec<LayerSpec>, input_shape: Vec<usize>, first_layer: usize) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(CoreError::domain(format!("invalid input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape.clone()];
        for (i, layer) in layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| CoreError::domain(format!("layer {}: {e}", first_layer + i)))?;
            shapes.push(next);
        }
        Ok(Self { layers, input_shape, first_layer, shapes })
    }

    /// The small CNN used throughout the experiments: four blocks of
    /// (3x3 conv, ReLU, dropout, 2x2 max-pool) with the given channel
    /// counts, then flatten, a hidden dense layer with ReLU and dropout, and
    /// a dense output layer.
    pub fn cnn(input_shape: [usize; 3], channels: &[usize], hidden: usize, classes: usize, dropout: f64) -> Result<Self> {
        let mut layers = Vec::new();
        let mut c = input_shape[0];
        for &out in channels {
            layers.push(LayerSpec::conv3x3(c, out));
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::Dropout { p: dropout });
            layers.push(LayerSpec::MaxPool2d { size: 2 });
            c = out;
        }
        let pooled = 1usize << channels.len();
        if !input_shape[1].is_multiple_of(pooled) || !input_shape[2].is_multiple_of(pooled) {
            return Err(CoreError::domain(format!(
                "input {input_shape:?} is not divisible by the total pooling factor {pooled}"
            )));
        }
        let flat = c * (input_shape[1] / pooled) * (input_shape[2] / pooled);
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense { fan_in: flat, fan_out: hidden });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Dropout { p: dropout });
        layers.push(LayerSpec::Dense { fan_in: hidden, fan_out: classes });
        Self::new(layers, input_shape.to_vec())
    }

    /// The default 1x32x32 network with 8-16-32-64 feature maps, a
    /// 512-unit hidden layer and two outputs.
    pub fn desk_cnn() -> Self {
        Self::cnn([1, 32, 32], &[8, 16, 32, 64], 512, 2, 0.5).expect("built-in network is well formed")
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    /// Per-sample input shape of layer `i` (`i == len()` gives the output).
    pub fn shape_at(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn first_layer(&self) -> usize {
        self.first_layer
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Splits after `cut` layers into a client part (layers `0..cut`) and a
    /// server part (the rest, consuming the client's output).
    pub fn split(&self, cut: usize) -> Result<(ModelSpec, ModelSpec)> {
        if cut > self.layers.len() {
            return Err(CoreError::domain(format!("cut {cut} exceeds layer count {}", self.layers.len())));
        }
        let client = Self::with_offset(self.layers[..cut].to_vec(), self.input_shape.clone(), self.first_layer)?;
        let server =
            Self::with_offset(self.layers[cut..].to_vec(), self.shapes[cut].clone(), self.first_layer + cut)?;
        Ok((client, server))
    }

    /// Rejoins a client part and the server part that follows it.
    pub fn concat(&self, next: &ModelSpec) -> Result<ModelSpec> {
        if next.first_layer != self.first_layer + self.len() || next.input_shape != self.output_shape() {
            return Err(CoreError::domain("specs are not adjacent"));
        }
        let mut layers = self.layers.clone();
        layers.extend(next.layers.iter().cloned());
        Self::with_offset(layers, self.input_shape.clone(), self.first_layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_parameter_count() {
        assert_eq!(LayerSpec::Dense { fan_in: 4, fan_out: 3 }.param_count(), 15);
    }

    #[test]
    fn desk_cnn_shapes_and_parameter_count() {
        let spec = ModelSpec::desk_cnn();
        assert_eq!(spec.len(), 21);
        assert_eq!(spec.shape_at(4), &[8, 16, 16]);
        assert_eq!(spec.shape_at(8), &[16, 8, 8]);
        assert_eq!(spec.shape_at(12), &[32, 4, 4]);
        assert_eq!(spec.shape_at(16), &[64, 2, 2]);
        assert_eq!(spec.output_shape(), &[2]);
        // conv: k*k*Cin*Cout + Cout per block; dense 256->512 and 512->2.
        let conv = (9 * 8 + 8) + (9 * 8 * 16 + 16) + (9 * 16 * 32 + 32) + (9 * 32 * 64 + 64);
        let dense = (256 * 512 + 512) + (512 * 2 + 2);
        assert_eq!(conv, 24_384);
        assert_eq!(dense, 132_610);
        assert_eq!(spec.param_count(), conv + dense);
    }

    #[test]
    fn split_and_concat_round_trip() {
        let spec = ModelSpec::desk_cnn();
        for cut in 0..=spec.len() {
            let (client, server) = spec.split(cut).unwrap();
            assert_eq!(client.len(), cut);
            assert_eq!(server.first_layer(), cut);
            assert_eq!(server.input_shape(), spec.shape_at(cut));
            assert_eq!(client.param_count() + server.param_count(), spec.param_count());
            assert_eq!(client.concat(&server).unwrap(), spec);
        }
        assert!(spec.split(22).is_err());
    }

    #[test]
    fn mismatched_layers_are_rejected() {
        let err = ModelSpec::new(vec![LayerSpec::Dense { fan_in: 5, fan_out: 2 }], vec![4]);
        assert!(err.is_err());
        let err = ModelSpec::new(vec![LayerSpec::conv3x3(3, 4)], vec![1, 8, 8]);
        assert!(err.is_err());
        assert!(ModelSpec::cnn([1, 30, 30], &[8, 16], 16, 2, 0.5).is_err());
    }
}
