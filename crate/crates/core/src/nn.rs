//! Dense layers, a tanh MLP with manual backprop, and SGD with momentum.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weights = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
        let bias = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound));
        Self { weights, bias }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weights: Array2::zeros((fan_out, fan_in)), bias: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.dot(&self.weights.t());
        out += &self.bias;
        out
    }
}

/// Stack of dense layers with `tanh` after every layer but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// `widths = [in, h1, ..., out]`.
    pub fn init(widths: &[usize], rng: &mut Rng) -> Self {
        let layers = widths.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::DimensionMismatch { expected: pair[0].fan_out(), got: pair[1].fan_in() });
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::DimensionMismatch { expected: layer.fan_out(), got: layer.bias.len() });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::fan_in)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::fan_out)
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Dense::zeros(l.fan_in(), l.fan_out())).collect() }
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(h.view());
            if i < last {
                h.mapv_inplace(f64::tanh);
            }
        }
        Ok(h)
    }

    pub fn forward_trace(&self, x: ArrayView2<'_, f64>) -> Result<Trace> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(h.view());
            inputs.push(h);
            h = next;
            if i < last {
                h.mapv_inplace(f64::tanh);
            }
        }
        Ok(Trace { inputs, output: h })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input batch.
    pub fn backward(&self, trace: &Trace, grad_out: Array2<f64>, grads: &mut Mlp) -> Array2<f64> {
        let mut delta = grad_out;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.inputs[i];
            let g = &mut grads.layers[i];
            g.weights += &delta.t().dot(input);
            g.bias += &delta.sum_axis(Axis(0));
            let mut upstream = delta.dot(&layer.weights);
            if i > 0 {
                // input to layer i is tanh of the previous pre-activation
                upstream.zip_mut_with(input, |u, &a| *u *= 1.0 - a * a);
            }
            delta = upstream;
        }
        delta
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_params(), "parameter vector length");
        let mut it = values.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = *it.next().unwrap();
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// SHA-256 over the little-endian parameter bytes.
    pub fn param_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for l in &self.layers {
            h.update((l.fan_out() as u32).to_le_bytes());
            h.update((l.fan_in() as u32).to_le_bytes());
            for v in l.weights.iter().chain(l.bias.iter()) {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Plain SGD with (PyTorch-style) momentum and L2 weight decay.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Dense>,
}

impl Sgd {
    pub fn new(model: &Mlp, momentum: f64, weight_decay: f64) -> Self {
        Self { momentum, weight_decay, velocity: model.zeros_like().layers }
    }

    pub fn step(&mut self, model: &mut Mlp, grads: &Mlp, lr: f64) {
        for ((p, g), v) in model.layers.iter_mut().zip(&grads.layers).zip(&mut self.velocity) {
            update(&mut p.weights, &g.weights, &mut v.weights, lr, self.momentum, self.weight_decay);
            update(&mut p.bias, &g.bias, &mut v.bias, lr, self.momentum, self.weight_decay);
        }
    }
}

fn update<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    vel: &mut ndarray::Array<f64, D>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    ndarray::Zip::from(param).and(grad).and(vel).for_each(|p, &g, v| {
        let g = g + weight_decay * *p;
        *v = momentum * *v + g;
        *p -= lr * *v;
    });
}

/// Cosine-decayed learning rate at step `t` of `total`.
pub fn cosine_lr(base: f64, t: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    0.5 * base * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos())
}
