//! Training objectives: the penalized negative ELBO of the causal VAE and the
//! plain negative ELBO of the compensation VAE.
//!
//! Both are minimized. The reconstruction term is the mean squared error over
//! every predicted element (a unit-variance Gaussian likelihood up to
//! constants); the KL term is summed over latent units and averaged over the
//! batch.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numcore::{Tape, Tensor, Var};
use crate::recnet::{Bound, CrvaeModel, Noise, WindowBatch};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub kl: f64,
    pub penalty: f64,
    pub lambda: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(recon: f64, kl: f64, penalty: f64, lambda: f64) -> Self {
        LossBreakdown {
            recon,
            kl,
            penalty,
            lambda,
            total: recon + kl + lambda * penalty,
        }
    }

    /// The smooth part `recon + kl`, which ISTA differentiates.
    pub fn smooth(&self) -> f64 {
        self.recon + self.kl
    }
}

/// `0.5 * sum(mu^2 + exp(log_var) - 1 - log_var)`.
pub fn kl_standard_normal(mu: &[f64], log_var: &[f64]) -> Result<f64> {
    if mu.len() != log_var.len() {
        return Err(Error::shape("kl_standard_normal", &[mu.len()], &[log_var.len()]));
    }
    Ok(0.5
        * mu
            .iter()
            .zip(log_var)
            .map(|(&m, &lv)| m * m + libm::exp(lv) - 1.0 - lv)
            .sum::<f64>())
}

/// Mean of squared elementwise differences.
pub fn reconstruction(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let diff = pred.zip_map(target, "reconstruction", |a, b| a - b)?;
    Ok(diff.data().iter().map(|d| d * d).sum::<f64>() / diff.numel() as f64)
}

/// Sum of the group norms of every head's first-layer input columns.
pub fn group_penalty(model: &CrvaeModel) -> f64 {
    model.causal_matrix().total()
}

/// KL of a `B x H_z` posterior batch, summed over units and averaged over rows.
pub fn kl_graph(tape: &mut Tape, mu: Var, log_var: Var) -> Result<Var> {
    let rows = tape.value(mu).rows() as f64;
    let m2 = tape.square(mu)?;
    let ev = tape.exp(log_var)?;
    let a = tape.add(m2, ev)?;
    let a = tape.sub(a, log_var)?;
    let a = tape.affine(a, 1.0, -1.0)?;
    let s = tape.sum(a)?;
    tape.scale(s, 0.5 / rows)
}

/// Mean squared error across a sequence of equally shaped steps.
pub fn mse_graph(tape: &mut Tape, preds: &[Var], targets: &[Var]) -> Result<Var> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::contract("mse_graph needs matching, non-empty sequences"));
    }
    let mut acc: Option<Var> = None;
    let mut count = 0usize;
    for (&p, &t) in preds.iter().zip(targets) {
        let d = tape.sub(p, t)?;
        let sq = tape.square(d)?;
        count += tape.value(sq).numel();
        let s = tape.sum(sq)?;
        acc = Some(match acc {
            None => s,
            Some(a) => tape.add(a, s)?,
        });
    }
    tape.scale(acc.expect("non-empty"), 1.0 / count as f64)
}

/// Smooth loss `recon + kl` of the causal VAE on `tape`, plus the handles
/// needed to derive compensation residuals.
pub struct MainLoss {
    pub loss: Var,
    pub recon: Var,
    pub kl: Var,
    pub preds: Vec<Var>,
}

pub fn main_loss_graph(
    model: &CrvaeModel,
    tape: &mut Tape,
    bound: &Bound,
    batch: &WindowBatch,
    noise: Noise<'_>,
) -> Result<MainLoss> {
    let g = model.main_graph(tape, bound, batch, noise)?;
    let targets: Vec<Var> = batch.target.iter().map(|t| tape.constant(t.clone())).collect();
    let recon = mse_graph(tape, &g.preds, &targets)?;
    let kl = kl_graph(tape, g.mu, g.log_var)?;
    let loss = tape.add(recon, kl)?;
    Ok(MainLoss {
        loss,
        recon,
        kl,
        preds: g.preds,
    })
}

pub struct CompLoss {
    pub loss: Var,
    pub recon: Var,
    pub kl: Var,
}

/// Negative ELBO of the compensation VAE on detached residual steps.
pub fn comp_loss_graph(
    model: &CrvaeModel,
    tape: &mut Tape,
    bound: &Bound,
    residuals: &[Tensor],
    noise: Noise<'_>,
) -> Result<CompLoss> {
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::contract("residuals must be finite"));
    }
    let g = model.comp_graph(tape, bound, residuals, noise)?;
    let targets: Vec<Var> = residuals.iter().map(|t| tape.constant(t.clone())).collect();
    let recon = mse_graph(tape, &g.recon, &targets)?;
    let kl = kl_graph(tape, g.mu, g.log_var)?;
    let loss = tape.add(recon, kl)?;
    Ok(CompLoss { loss, recon, kl })
}

fn inference_tape(model: &CrvaeModel) -> (Tape, Bound) {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape, |_| false);
    (tape, bound)
}

/// Penalized loss of the causal VAE on a batch of windows.
pub fn crvae_loss(model: &CrvaeModel, windows: &[Tensor], lambda: f64, noise: Noise<'_>) -> Result<LossBreakdown> {
    if !(lambda >= 0.0) {
        return Err(Error::contract("lambda must be nonnegative"));
    }
    let batch = WindowBatch::new(windows, model.dims())?;
    let (mut tape, bound) = inference_tape(model);
    let l = main_loss_graph(model, &mut tape, &bound, &batch, noise)?;
    Ok(LossBreakdown::new(
        tape.value(l.recon).data()[0],
        tape.value(l.kl).data()[0],
        group_penalty(model),
        lambda,
    ))
}

/// Loss of the compensation VAE on one `(tau+1) x M` residual segment.
pub fn comp_loss(model: &CrvaeModel, eps_segment: &Tensor, noise: Noise<'_>) -> Result<LossBreakdown> {
    let steps: Vec<Tensor> = (0..eps_segment.rows())
        .map(|r| Tensor::row(eps_segment.row_slice(r)))
        .collect();
    let (mut tape, bound) = inference_tape(model);
    let l = comp_loss_graph(model, &mut tape, &bound, &steps, noise)?;
    Ok(LossBreakdown::new(
        tape.value(l.recon).data()[0],
        tape.value(l.kl).data()[0],
        0.0,
        0.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_standard_normal(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!((kl_standard_normal(&[1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-12);
        let want = 0.5 * (core::f64::consts::E - 2.0);
        assert!((kl_standard_normal(&[0.0], &[1.0]).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.35914).abs() < 1e-5);
    }

    #[test]
    fn reconstruction_cases() {
        let a = Tensor::row(&[0.0, 2.0]);
        let b = Tensor::row(&[1.0, 0.0]);
        assert_eq!(reconstruction(&a, &b).unwrap(), 2.5);
        assert_eq!(reconstruction(&a, &a).unwrap(), 0.0);
        let c = Tensor::row(&[1.0, 3.0]);
        assert_eq!(reconstruction(&c, &a).unwrap(), 1.0);
        assert!(reconstruction(&a, &Tensor::row(&[1.0])).is_err());
    }

    #[test]
    fn kl_graph_matches_scalar_formula() {
        let mu = Tensor::matrix(2, 2, alloc::vec![0.3, -1.0, 0.0, 2.0]).unwrap();
        let lv = Tensor::matrix(2, 2, alloc::vec![0.1, 0.0, -0.5, 1.5]).unwrap();
        let mut tape = Tape::new();
        let (m, l) = (tape.constant(mu.clone()), tape.constant(lv.clone()));
        let k = kl_graph(&mut tape, m, l).unwrap();
        let oracle = (kl_standard_normal(mu.row_slice(0), lv.row_slice(0)).unwrap()
            + kl_standard_normal(mu.row_slice(1), lv.row_slice(1)).unwrap())
            / 2.0;
        assert!((tape.value(k).data()[0] - oracle).abs() < 1e-12);
    }
}
