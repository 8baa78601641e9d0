//! Parameter updates: SGD, Adam, the grouped ISTA proximal step and prune-mask
//! enforcement.

use alloc::vec::Vec;

use crate::numcore::Tensor;
use crate::recnet::CrvaeModel;
use crate::{Error, Result};

/// `param -= lr * grad`.
pub fn sgd_step(param: &mut Tensor, grad: &Tensor, lr: f64) -> Result<()> {
    param.axpy(-lr, grad)
}

/// Per-parameter Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Tensor,
    v: Tensor,
    t: u64,
}

impl AdamState {
    pub fn new(shape: &[usize]) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    states: Vec<AdamState>,
}

impl Adam {
    /// One state per tensor in `shapes`, default betas and epsilon.
    pub fn new(lr: f64, shapes: &[&[usize]]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            states: shapes.iter().map(|s| AdamState::new(s)).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::contract("Adam: parameter count changed"));
        }
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.states) {
            adam_step(s, p, g, lr, b1, b2, eps)?;
        }
        Ok(())
    }
}

/// Bias-corrected Adam update of one tensor.
pub fn adam_step(
    state: &mut AdamState,
    param: &mut Tensor,
    grad: &Tensor,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if param.shape() != grad.shape() || state.m.shape() != grad.shape() {
        return Err(Error::shape("adam_step", param.shape(), grad.shape()));
    }
    state.t += 1;
    let c1 = 1.0 - libm::pow(beta1, state.t as f64);
    let c2 = 1.0 - libm::pow(beta2, state.t as f64);
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (((w, &g), m), v) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *w -= lr * mh / (libm::sqrt(vh) + eps);
    }
    Ok(())
}

/// Block soft-threshold on every column of `w`: columns with norm at most
/// `threshold` become exactly zero, the rest shrink toward zero by
/// `threshold` in norm.
pub fn block_soft_threshold(w: &mut Tensor, threshold: f64) {
    let (rows, cols) = (w.rows(), w.cols());
    let data = w.data_mut();
    for c in 0..cols {
        let norm = libm::sqrt((0..rows).map(|r| data[r * cols + c] * data[r * cols + c]).sum());
        if norm <= threshold {
            for r in 0..rows {
                data[r * cols + c] = 0.0;
            }
        } else {
            let f = (norm - threshold) / norm;
            for r in 0..rows {
                data[r * cols + c] *= f;
            }
        }
    }
}

/// Proximal gradient step on a head's input weights: a plain gradient step of
/// size `gamma`, then block soft-thresholding at `gamma * lambda`.
pub fn ista_step(w: &mut Tensor, grad: &Tensor, gamma: f64, lambda: f64) -> Result<()> {
    if !(gamma > 0.0) || !(lambda >= 0.0) {
        return Err(Error::contract("ista_step needs gamma > 0 and lambda >= 0"));
    }
    w.axpy(-gamma, grad)?;
    block_soft_threshold(w, gamma * lambda);
    Ok(())
}

/// Zeroes column `v` of head `p`'s input weights wherever the mask is off.
pub fn apply_mask(model: &mut CrvaeModel) {
    let m = model.dims().series;
    let mask = model.mask().to_vec();
    for p in 0..m {
        let w = model.head_input_mut(p);
        zero_masked_columns(w, &mask[p * m..(p + 1) * m]);
    }
}

/// Sets every column `c` with `keep[c] == false` to zero.
pub fn zero_masked_columns(t: &mut Tensor, keep: &[bool]) {
    let cols = t.cols();
    for r in 0..t.rows() {
        for (x, &k) in t.row_slice_mut(r).iter_mut().zip(keep.iter().take(cols)) {
            if !k {
                *x = 0.0;
            }
        }
    }
}
