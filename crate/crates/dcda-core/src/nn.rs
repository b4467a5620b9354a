//! Minimal reverse-mode differentiation over static fully connected stacks.
//!
//! A stack is an ordered list of dense layers `y = act(x W + b)` with
//! weights stored `in x out`. `forward` records pre- and post-activation
//! matrices on a [`Tape`]; `backward` replays the tape once in reverse and
//! returns parameter gradients plus the gradient w.r.t. the stack input.
//! The gradient reverse layer lives here as well: identity forward,
//! `-lambda` scaling backward.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Floor applied to softmax outputs so no probability is exactly zero.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::ModelFormat(format!("unknown activation `{other}`"))),
        }
    }
}

/// Dense layer: weights `in_dim x out_dim`, bias length `out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    /// Glorot-uniform weights in `[-sqrt(6/(in+out)), +sqrt(6/(in+out))]`,
    /// zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut weights = Matrix::zeros(in_dim, out_dim);
        for v in weights.data_mut() {
            *v = rng.gen_range(-limit..=limit);
        }
        Layer {
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Ordered dense layers with chained dimensions; softmax may appear only
/// as the final activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layers: Vec<Layer>,
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("layer stack may not be empty".into()));
        }
        for i in 1..layers.len() {
            if layers[i - 1].out_dim() != layers[i].in_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} out {} != layer {} in {}",
                    i - 1,
                    layers[i - 1].out_dim(),
                    i,
                    layers[i].in_dim()
                )));
            }
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(Error::InvalidConfig(
                    "softmax allowed only on the final layer".into(),
                ));
            }
        }
        Ok(LayerStack { layers })
    }

    /// Glorot-initialized stack over the dimension chain `dims`, with
    /// `activations[i]` applied after layer `i`.
    pub fn glorot<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::InvalidConfig(format!(
                "need n+1 dims for n activations, got {} dims / {} activations",
                dims.len(),
                activations.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| Layer::glorot(w[0], w[1], a, rng))
            .collect();
        LayerStack::new(layers)
    }

    #[inline]
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    #[inline]
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }
}

/// Forward intermediates for one batch: the stack input plus each layer's
/// pre- and post-activation matrices, consumed exactly once by `backward`.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Matrix,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        self.post.last().expect("tape holds at least one layer")
    }
}

/// Per-layer parameter gradients, shapes mirroring the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub d_weights: Matrix,
    pub d_bias: Vec<f64>,
}

/// Gradients for every layer of a stack.
pub type StackGrads = Vec<LayerGrads>;

pub fn zero_grads(stack: &LayerStack) -> StackGrads {
    stack
        .layers()
        .iter()
        .map(|l| LayerGrads {
            d_weights: Matrix::zeros(l.in_dim(), l.out_dim()),
            d_bias: vec![0.0; l.out_dim()],
        })
        .collect()
}

/// Accumulates `scale * src` into `dst`.
pub fn add_grads(dst: &mut StackGrads, src: &StackGrads, scale: f64) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        d.d_weights
            .add_scaled_assign(&s.d_weights, scale)
            .expect("gradient shapes agree");
        for (b, &g) in d.d_bias.iter_mut().zip(&s.d_bias) {
            *b += scale * g;
        }
    }
}

fn apply_activation(pre: &Matrix, activation: Activation) -> Matrix {
    match activation {
        Activation::Identity => pre.clone(),
        Activation::Relu => {
            let mut out = pre.clone();
            for v in out.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            out
        }
        Activation::Softmax => {
            let mut out = pre.clone();
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp().max(PROB_FLOOR);
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            out
        }
    }
}

/// Runs the stack on a batch (rows are samples), recording a tape.
pub fn forward(stack: &LayerStack, input: &Matrix) -> Result<(Matrix, Tape)> {
    if input.cols() != stack.in_dim() {
        return Err(Error::DimensionMismatch(format!(
            "stack expects {} input columns, got {}",
            stack.in_dim(),
            input.cols()
        )));
    }
    let mut pre = Vec::with_capacity(stack.layers().len());
    let mut post = Vec::with_capacity(stack.layers().len());
    let mut current = input.clone();
    for layer in stack.layers() {
        let mut z = current.matmul(&layer.weights)?;
        for r in 0..z.rows() {
            let row = z.row_mut(r);
            for (v, &b) in row.iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        let a = apply_activation(&z, layer.activation);
        pre.push(z);
        post.push(a.clone());
        current = a;
    }
    let tape = Tape {
        input: input.clone(),
        pre,
        post,
    };
    Ok((current, tape))
}

fn activation_backward(activation: Activation, pre: &Matrix, post: &Matrix, grad: &Matrix) -> Matrix {
    match activation {
        Activation::Identity => grad.clone(),
        Activation::Relu => {
            let mut out = grad.clone();
            for (v, &z) in out.data_mut().iter_mut().zip(pre.data()) {
                if z <= 0.0 {
                    *v = 0.0;
                }
            }
            out
        }
        Activation::Softmax => {
            // Row-wise Jacobian: dz_j = p_j * (g_j - sum_k g_k p_k).
            let mut out = grad.clone();
            for r in 0..out.rows() {
                let p = post.row(r);
                let dot: f64 = out.row(r).iter().zip(p).map(|(g, q)| g * q).sum();
                let row = out.row_mut(r);
                for (v, &q) in row.iter_mut().zip(p) {
                    *v = q * (*v - dot);
                }
            }
            out
        }
    }
}

/// Replays the tape in reverse. Returns per-layer parameter gradients and
/// the gradient w.r.t. the stack input.
pub fn backward(stack: &LayerStack, tape: &Tape, output_grad: &Matrix) -> Result<(StackGrads, Matrix)> {
    let n = stack.layers().len();
    if tape.pre.len() != n || tape.post.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "tape records {} layers, stack has {n}",
            tape.pre.len()
        )));
    }
    let out = tape.output();
    if output_grad.rows() != out.rows() || output_grad.cols() != out.cols() {
        return Err(Error::DimensionMismatch(format!(
            "output_grad {}x{} does not match forward output {}x{}",
            output_grad.rows(),
            output_grad.cols(),
            out.rows(),
            out.cols()
        )));
    }
    for (i, layer) in stack.layers().iter().enumerate() {
        if tape.pre[i].cols() != layer.out_dim() {
            return Err(Error::DimensionMismatch(format!(
                "tape layer {i} width {} does not match stack layer out {}",
                tape.pre[i].cols(),
                layer.out_dim()
            )));
        }
    }

    let mut grads = Vec::with_capacity(n);
    let mut grad = output_grad.clone();
    for (i, layer) in stack.layers().iter().enumerate().rev() {
        let dz = activation_backward(layer.activation, &tape.pre[i], &tape.post[i], &grad);
        let layer_input = if i == 0 { &tape.input } else { &tape.post[i - 1] };
        let d_weights = layer_input.matmul_tn(&dz)?;
        let d_bias = dz.col_sums();
        grad = dz.matmul_nt(&layer.weights)?;
        grads.push(LayerGrads { d_weights, d_bias });
    }
    grads.reverse();
    Ok((grads, grad))
}

/// Gradient reverse layer, backward half: `-lambda * upstream`.
/// The forward half is the identity, so there is nothing to compute there.
pub fn grad_reverse(upstream: &Matrix, lambda: f64) -> Matrix {
    debug_assert!(lambda >= 0.0, "GRL lambda must be non-negative");
    upstream.scale(-lambda)
}
