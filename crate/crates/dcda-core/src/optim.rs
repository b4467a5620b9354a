//! SGD with momentum.
//!
//! Update rule: `v <- momentum * v + g`, `p <- p - lr * v`. Velocity
//! buffers mirror the parameter shapes and are owned by the caller so a
//! training run carries its own optimizer state.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{LayerStack, StackGrads};

#[derive(Debug, Clone, Copy)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
}

/// Velocity buffers for one layer stack (weights then bias, per layer).
#[derive(Debug, Clone)]
pub struct StackVelocity {
    weights: Vec<Matrix>,
    bias: Vec<Vec<f64>>,
}

impl StackVelocity {
    pub fn zeros(stack: &LayerStack) -> Self {
        StackVelocity {
            weights: stack
                .layers()
                .iter()
                .map(|l| Matrix::zeros(l.in_dim(), l.out_dim()))
                .collect(),
            bias: stack.layers().iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if lr.is_nan() || lr <= 0.0 {
            return Err(Error::InvalidConfig(format!("lr must be > 0, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0,1), got {momentum}"
            )));
        }
        Ok(SgdMomentum { lr, momentum })
    }

    /// Applies one update to every parameter of `stack`.
    ///
    /// `term` names the loss that produced `grads`; it is surfaced if any
    /// gradient entry is non-finite.
    pub fn step_stack(
        &self,
        stack: &mut LayerStack,
        grads: &StackGrads,
        vel: &mut StackVelocity,
        term: &str,
    ) -> Result<()> {
        if grads.len() != stack.layers().len() {
            return Err(Error::DimensionMismatch(format!(
                "{} gradient layers for a {}-layer stack",
                grads.len(),
                stack.layers().len()
            )));
        }
        for g in grads {
            if !g.d_weights.all_finite() || !g.d_bias.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient { term: term.into() });
            }
        }
        for (li, layer) in stack.layers_mut().iter_mut().enumerate() {
            update_slice(
                layer.weights.data_mut(),
                grads[li].d_weights.data(),
                vel.weights[li].data_mut(),
                self.lr,
                self.momentum,
            );
            update_slice(
                &mut layer.bias,
                &grads[li].d_bias,
                &mut vel.bias[li],
                self.lr,
                self.momentum,
            );
        }
        Ok(())
    }

    /// Applies one update to a raw parameter matrix (used for centroids).
    pub fn step_matrix(
        &self,
        params: &mut Matrix,
        grad: &Matrix,
        vel: &mut Matrix,
        term: &str,
    ) -> Result<()> {
        if params.rows() != grad.rows() || params.cols() != grad.cols() {
            return Err(Error::DimensionMismatch(format!(
                "params {}x{} vs grad {}x{}",
                params.rows(),
                params.cols(),
                grad.rows(),
                grad.cols()
            )));
        }
        if !grad.all_finite() {
            return Err(Error::NonFiniteGradient { term: term.into() });
        }
        update_slice(
            params.data_mut(),
            grad.data(),
            vel.data_mut(),
            self.lr,
            self.momentum,
        );
        Ok(())
    }
}

fn update_slice(params: &mut [f64], grads: &[f64], vel: &mut [f64], lr: f64, momentum: f64) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), vel.len());
    for i in 0..params.len() {
        vel[i] = momentum * vel[i] + grads[i];
        params[i] -= lr * vel[i];
    }
}
