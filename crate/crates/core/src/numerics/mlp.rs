use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::gemm;
use super::{Matrix, Rng};
use crate::{Error, Result};

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    /// Byte tag used by the checkpoint format.
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// Borrowed view of one layer: `weight` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub shape: LayerShape,
    pub weight: &'a [f64],
    pub bias: &'a [f64],
}

/// Weight initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MlpInit {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)), zero bias.
    GlorotUniform,
    /// Glorot for hidden layers, uniform in ±scale for the last layer.
    GlorotWithSmallOutput(f64),
}

/// Fully connected network. Parameters live in one flat buffer laid out
/// layer by layer as `[weights (row-major), bias]`, so optimizers and
/// gradient checks can treat the whole model as a single vector.
#[derive(Debug, Clone)]
pub struct Mlp {
    shapes: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    generation: u64,
}

/// Activations recorded by [`Mlp::forward_batch`]; consumed by [`Mlp::backward_batch`].
#[derive(Debug, Clone)]
pub struct BatchCache {
    generation: u64,
    input: Matrix,
    outputs: Vec<Matrix>,
}

impl BatchCache {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("mlp has at least one layer")
    }

    /// Post-activation output of layer `i`.
    pub fn layer_output(&self, i: usize) -> &Matrix {
        &self.outputs[i]
    }

    pub fn input(&self) -> &Matrix {
        &self.input
    }
}

/// Single-sample cache returned by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct VectorCache(BatchCache);

impl VectorCache {
    pub fn layer_output(&self, i: usize) -> &[f64] {
        self.0.outputs[i].row(0)
    }
}

/// Parameter gradients (flat, summed over the batch) and input gradients.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Matrix,
}

impl Mlp {
    /// Build a network with layer widths `dims` (`dims[0]` is the input width).
    pub fn new(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        init: MlpInit,
        rng: &mut Rng,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::rejected(format!("invalid mlp dims {dims:?}")));
        }
        let n_layers = dims.len() - 1;
        let shapes: Vec<LayerShape> = (0..n_layers)
            .map(|i| LayerShape {
                inputs: dims[i],
                outputs: dims[i + 1],
                activation: if i + 1 == n_layers { output } else { hidden },
            })
            .collect();
        let mut params = Vec::with_capacity(shapes.iter().map(LayerShape::param_count).sum());
        for (i, s) in shapes.iter().enumerate() {
            let glorot = (6.0 / (s.inputs + s.outputs) as f64).sqrt();
            let limit = match init {
                MlpInit::GlorotWithSmallOutput(scale) if i + 1 == n_layers => scale,
                _ => glorot,
            };
            params.extend((0..s.inputs * s.outputs).map(|_| rng.random_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, s.outputs));
        }
        Ok(Self::from_parts(shapes, params))
    }

    /// Build from explicit `(weight, bias, activation)` triples.
    pub fn from_layers(layers: Vec<(Matrix, Vec<f64>, Activation)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::rejected("mlp needs at least one layer"));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut params = Vec::new();
        for (i, (w, b, act)) in layers.into_iter().enumerate() {
            if b.len() != w.rows() {
                return Err(Error::rejected(format!(
                    "layer {i}: bias length {} != weight rows {}",
                    b.len(),
                    w.rows()
                )));
            }
            if let Some(prev) = shapes.last().map(|s: &LayerShape| s.outputs) {
                if prev != w.cols() {
                    return Err(Error::rejected(format!(
                        "layer {i}: input width {} does not chain with previous output {prev}",
                        w.cols()
                    )));
                }
            }
            if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::rejected(format!("layer {i}: non-finite parameters")));
            }
            shapes.push(LayerShape {
                inputs: w.cols(),
                outputs: w.rows(),
                activation: act,
            });
            params.extend_from_slice(w.as_slice());
            params.extend_from_slice(&b);
        }
        Ok(Self::from_parts(shapes, params))
    }

    fn from_parts(shapes: Vec<LayerShape>, params: Vec<f64>) -> Self {
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut acc = 0;
        for s in &shapes {
            offsets.push(acc);
            acc += s.param_count();
        }
        debug_assert_eq!(acc, params.len());
        Self {
            shapes,
            offsets,
            params,
            generation: next_generation(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.shapes[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.shapes[self.shapes.len() - 1].outputs
    }

    pub fn n_layers(&self) -> usize {
        self.shapes.len()
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the flat parameter vector. Invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation = next_generation();
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::rejected(format!(
                "parameter length {} != {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params_mut().copy_from_slice(params);
        Ok(())
    }

    pub fn layer(&self, i: usize) -> LayerView<'_> {
        let s = self.shapes[i];
        let off = self.offsets[i];
        let nw = s.inputs * s.outputs;
        LayerView {
            shape: s,
            weight: &self.params[off..off + nw],
            bias: &self.params[off + nw..off + nw + s.outputs],
        }
    }

    /// Polyak averaging `self ← (1−tau)·self + tau·source`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if source.shapes != self.shapes {
            return Err(Error::rejected("soft update between different architectures"));
        }
        for (t, s) in self.params_mut().iter_mut().zip(&source.params) {
            *t = (1.0 - tau) * *t + tau * s;
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::rejected(format!(
                "input width {} != model input dim {}",
                x.cols(),
                self.input_dim()
            )));
        }
        if !x.is_finite() {
            return Err(Error::rejected("non-finite input"));
        }
        Ok(())
    }

    fn layer_forward(&self, i: usize, x: &Matrix) -> Matrix {
        let view = self.layer(i);
        let s = view.shape;
        let n = x.rows();
        let mut z = Matrix::zeros(n, s.outputs);
        // z = x · Wᵀ, Wᵀ viewed through strides (element (k, j) = W[j, k]).
        gemm(
            n,
            s.inputs,
            s.outputs,
            x.as_slice(),
            (s.inputs, 1),
            view.weight,
            (1, s.inputs),
            z.as_mut_slice(),
            false,
        );
        for r in 0..n {
            for (v, b) in z.row_mut(r).iter_mut().zip(view.bias) {
                *v = s.activation.apply(*v + b);
            }
        }
        z
    }

    /// Forward a batch (one sample per row) without recording a cache.
    pub fn predict_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = self.layer_forward(0, x);
        for i in 1..self.shapes.len() {
            h = self.layer_forward(i, &h);
        }
        Ok(h)
    }

    /// Activations after the first `n_layers` layers (the penultimate layer when
    /// `n_layers = self.n_layers() - 1`).
    pub fn predict_prefix(&self, x: &Matrix, n_layers: usize) -> Result<Matrix> {
        self.check_input(x)?;
        if n_layers == 0 || n_layers > self.shapes.len() {
            return Err(Error::rejected(format!("prefix of {n_layers} layers")));
        }
        let mut h = self.layer_forward(0, x);
        for i in 1..n_layers {
            h = self.layer_forward(i, &h);
        }
        Ok(h)
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<BatchCache> {
        self.check_input(x)?;
        let mut outputs = Vec::with_capacity(self.shapes.len());
        outputs.push(self.layer_forward(0, x));
        for i in 1..self.shapes.len() {
            let h = self.layer_forward(i, &outputs[i - 1]);
            outputs.push(h);
        }
        Ok(BatchCache {
            generation: self.generation,
            input: x.clone(),
            outputs,
        })
    }

    /// Backpropagate `grad_out` (∂L/∂output, one row per sample). Parameter
    /// gradients are summed over the batch.
    pub fn backward_batch(&self, cache: &BatchCache, grad_out: &Matrix) -> Result<Gradients> {
        if cache.generation != self.generation {
            return Err(Error::ContractViolation(
                "stale forward cache: model parameters changed since the forward pass".into(),
            ));
        }
        let n = cache.input.rows();
        if grad_out.rows() != n || grad_out.cols() != self.output_dim() {
            return Err(Error::ContractViolation(format!(
                "output gradient shape {}x{} does not match cached batch {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                n,
                self.output_dim()
            )));
        }
        let mut params = vec![0.0; self.params.len()];
        let mut delta = grad_out.clone();
        for i in (0..self.shapes.len()).rev() {
            let view = self.layer(i);
            let s = view.shape;
            let out = &cache.outputs[i];
            for (d, y) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *d *= s.activation.derivative_from_output(*y);
            }
            let x = if i == 0 { &cache.input } else { &cache.outputs[i - 1] };
            let off = self.offsets[i];
            let nw = s.inputs * s.outputs;
            let (gw, gb) = params[off..off + nw + s.outputs].split_at_mut(nw);
            // dW (out×in) = deltaᵀ (out×n) · x (n×in)
            gemm(
                s.outputs,
                n,
                s.inputs,
                delta.as_slice(),
                (1, s.outputs),
                x.as_slice(),
                (s.inputs, 1),
                gw,
                false,
            );
            for r in 0..n {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            // dX (n×in) = delta (n×out) · W (out×in)
            let mut dx = Matrix::zeros(n, s.inputs);
            gemm(
                n,
                s.outputs,
                s.inputs,
                delta.as_slice(),
                (s.outputs, 1),
                view.weight,
                (s.inputs, 1),
                dx.as_mut_slice(),
                false,
            );
            delta = dx;
        }
        Ok(Gradients {
            params,
            input: delta,
        })
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, VectorCache)> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let cache = self.forward_batch(&x)?;
        let out = cache.output().row(0).to_vec();
        Ok((out, VectorCache(cache)))
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.predict_batch(&x)?.into_vec())
    }

    /// Single-sample backward pass.
    pub fn backward(&self, cache: &VectorCache, output_gradient: &[f64]) -> Result<Gradients> {
        let g = Matrix::from_vec(1, output_gradient.len(), output_gradient.to_vec())
            .map_err(|e| Error::ContractViolation(e.to_string()))?;
        self.backward_batch(&cache.0, &g)
    }
}
