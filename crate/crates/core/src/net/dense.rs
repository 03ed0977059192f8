use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Linear => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Linear),
            other => Err(Error::Format(format!("unknown activation code {other}"))),
        }
    }
}

/// Affine map followed by an activation. `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

/// A chain of fully connected layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Per-layer parameter gradients, same shapes as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub bias: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| DMatrix::zeros(l.weights.nrows(), l.weights.ncols())).collect(),
            bias: net.layers.iter().map(|l| DVector::zeros(l.bias.len())).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.amax())
            .chain(self.bias.iter().map(|b| b.amax()))
            .fold(0.0, f64::max)
    }
}

/// Layer outputs recorded by [`DenseNet::forward_cached`]; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().expect("input is always recorded")
    }
}

impl DenseNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("a network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.nrows() {
                return Err(Error::DimensionMismatch {
                    what: "layer bias",
                    expected: l.weights.nrows(),
                    got: l.bias.len(),
                });
            }
            if i > 0 && layers[i - 1].weights.nrows() != l.weights.ncols() {
                return Err(Error::DimensionMismatch {
                    what: "layer chain",
                    expected: layers[i - 1].weights.nrows(),
                    got: l.weights.ncols(),
                });
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self { layers })
    }

    /// ReLU hidden layers and a linear output layer with widths `dims[1..]`. Weights
    /// are uniform in `±√(6 / (fan_in + fan_out))`, biases zero.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer widths {dims:?}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit)),
                    bias: DVector::zeros(fan_out),
                    activation: if i == last { Activation::Linear } else { Activation::Relu },
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weights.nrows()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.input_dim(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input.len())?;
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        Ok(self.forward_batch(x).as_slice().to_vec())
    }

    /// Forward pass over a batch stored one sample per column.
    pub fn forward_batch(&self, mut x: DMatrix<f64>) -> DMatrix<f64> {
        for layer in &self.layers {
            x = apply_layer(layer, &x);
        }
        x
    }

    pub fn forward_cached(&self, x: DMatrix<f64>) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x);
        for layer in &self.layers {
            let next = apply_layer(layer, activations.last().expect("nonempty"));
            activations.push(next);
        }
        ForwardCache { activations }
    }

    /// Parameter gradients summed over the batch, given `d loss / d output`.
    pub fn backward_batch(&self, cache: &ForwardCache, output_grad: &DMatrix<f64>) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        let mut delta = output_grad.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.activation == Activation::Relu {
                let out = &cache.activations[l + 1];
                delta.zip_apply(out, |d, o| {
                    if o <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            let input = &cache.activations[l];
            grads.weights[l] = &delta * input.transpose();
            grads.bias[l] = delta.column_sum();
            if l > 0 {
                delta = layer.weights.tr_mul(&delta);
            }
        }
        grads
    }

    pub fn backward(&self, input: &[f64], loss_grad: &[f64]) -> Result<Gradients> {
        self.check_input(input.len())?;
        if loss_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "loss gradient",
                expected: self.output_dim(),
                got: loss_grad.len(),
            });
        }
        let cache = self.forward_cached(DMatrix::from_column_slice(input.len(), 1, input));
        let g = DMatrix::from_column_slice(loss_grad.len(), 1, loss_grad);
        Ok(self.backward_batch(&cache, &g))
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}

fn apply_layer(layer: &Layer, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = &layer.weights * x;
    for mut col in z.column_iter_mut() {
        col += &layer.bias;
    }
    if layer.activation == Activation::Relu {
        z.apply(|v| *v = v.max(0.0));
    }
    z
}
