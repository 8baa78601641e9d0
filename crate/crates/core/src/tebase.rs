//! Transfer-entropy baseline built on the matrix-based Rényi entropy
//! functional: entropies are read off the eigenvalues of trace-normalized
//! Gaussian Gram matrices, joint entropies off their Hadamard products.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::{Adjacency, Dataset};
use crate::eval::auroc;
use crate::numcore::Tensor;
use crate::recnet::CausalMatrix;
use crate::{Error, Result};

/// Eigenvalues below this are treated as zero.
const EIG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GramSpec {
    /// Gaussian kernel width.
    pub sigma: f64,
    /// Rényi order; must differ from 1.
    pub alpha: f64,
    /// Delay-embedding length of the past vectors.
    pub lag: usize,
    /// Cap on the number of embedded samples; longer series are strided.
    pub max_samples: usize,
}

impl Default for GramSpec {
    fn default() -> Self {
        GramSpec {
            sigma: 0.1,
            alpha: 1.01,
            lag: 2,
            max_samples: 256,
        }
    }
}

/// Kernel widths tried by [`best_te_auroc`].
pub const SIGMA_GRID: [f64; 3] = [0.1, 0.2, 0.5];

/// `K / trace(K)` with `K(n, m) = exp(-|x_n - x_m|^2 / (2 sigma^2))`, for
/// samples given as rows.
pub fn gram(samples: &Tensor, sigma: f64) -> Result<Tensor> {
    if !(sigma > 0.0) {
        return Err(Error::contract("gram: sigma must be positive"));
    }
    let n = samples.rows();
    let mut k = Tensor::zeros(&[n, n]);
    let denom = 2.0 * sigma * sigma;
    for i in 0..n {
        k.set(i, i, 1.0);
        for j in 0..i {
            let d: f64 = samples
                .row_slice(i)
                .iter()
                .zip(samples.row_slice(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = libm::exp(-d / denom);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    // The kernel diagonal is 1, so the trace is n.
    Ok(k.scale(1.0 / n as f64))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || alpha == 1.0 {
        return Err(Error::contract("renyi entropy needs alpha > 0 and alpha != 1"));
    }
    Ok(())
}

/// `1 / (1 - alpha) * log2(sum lambda_i^alpha)` over the eigenvalues of a
/// trace-one PSD matrix.
pub fn renyi_entropy(a: &Tensor, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape("renyi_entropy", a.shape(), &[n, n]));
    }
    let m = DMatrix::from_row_slice(n, n, a.data());
    let eig = m.symmetric_eigenvalues();
    let s: f64 = eig
        .iter()
        .filter(|&&l| l > EIG_FLOOR)
        .map(|&l| libm::pow(l, alpha))
        .sum();
    let h = libm::log2(s) / (1.0 - alpha);
    Ok(h.max(0.0))
}

/// Entropy of the normalized Hadamard product of the given Gram matrices.
pub fn joint_entropy(grams: &[&Tensor], alpha: f64) -> Result<f64> {
    let first = grams.first().ok_or_else(|| Error::contract("joint_entropy of nothing"))?;
    let mut h = (*first).clone();
    for g in &grams[1..] {
        h = h.zip_map(g, "joint_entropy", |a, b| a * b)?;
    }
    let n = h.rows();
    let tr: f64 = (0..n).map(|i| h.get(i, i)).sum();
    renyi_entropy(&h.scale(1.0 / tr), alpha)
}

/// Row indices `t` (targets) kept after striding to at most `cap` samples.
fn sample_times(len: usize, lag: usize, cap: usize) -> Vec<usize> {
    let avail = len - lag;
    let stride = avail.div_ceil(cap.max(1)).max(1);
    (lag..len).step_by(stride).collect()
}

fn embed(x: &[f64], times: &[usize], lag: usize) -> Tensor {
    let mut d = Vec::with_capacity(times.len() * lag);
    for &t in times {
        for k in 1..=lag {
            d.push(x[t - k]);
        }
    }
    Tensor::matrix(times.len(), lag, d).expect("positive extents")
}

fn present(x: &[f64], times: &[usize]) -> Tensor {
    Tensor::matrix(times.len(), 1, times.iter().map(|&t| x[t]).collect()).expect("positive extents")
}

/// Gram matrices of `y_t`, `y^-` and their joint entropies, reused across
/// every candidate cause of `y`.
struct TargetTerms {
    now: Tensor,
    past: Tensor,
    h_past: f64,
    h_now_past: f64,
}

fn target_terms(y: &[f64], times: &[usize], spec: &GramSpec) -> Result<TargetTerms> {
    let now = gram(&present(y, times), spec.sigma)?;
    let past = gram(&embed(y, times, spec.lag), spec.sigma)?;
    let h_past = renyi_entropy(&past, spec.alpha)?;
    let h_now_past = joint_entropy(&[&now, &past], spec.alpha)?;
    Ok(TargetTerms {
        now,
        past,
        h_past,
        h_now_past,
    })
}

fn te_given(x: &[f64], times: &[usize], t: &TargetTerms, spec: &GramSpec) -> Result<f64> {
    let xp = gram(&embed(x, times, spec.lag), spec.sigma)?;
    let h_x_past = joint_entropy(&[&xp, &t.past], spec.alpha)?;
    let h_all = joint_entropy(&[&t.now, &xp, &t.past], spec.alpha)?;
    // H(y|y-) - H(y|x-,y-)
    Ok((t.h_now_past - t.h_past) - (h_all - h_x_past))
}

fn check_series(x: &[f64], y: &[f64], spec: &GramSpec) -> Result<()> {
    check_alpha(spec.alpha)?;
    if spec.lag == 0 {
        return Err(Error::contract("transfer entropy needs lag >= 1"));
    }
    if x.len() != y.len() {
        return Err(Error::shape("transfer_entropy", &[x.len()], &[y.len()]));
    }
    if x.len() < spec.lag + 2 {
        return Err(Error::contract(alloc::format!(
            "transfer entropy needs at least lag + 2 = {} samples",
            spec.lag + 2
        )));
    }
    Ok(())
}

/// `TE(x -> y) = H(y_t | y^-) - H(y_t | x^-, y^-)` in bits.
pub fn transfer_entropy(x: &[f64], y: &[f64], spec: &GramSpec) -> Result<f64> {
    check_series(x, y, spec)?;
    let times = sample_times(y.len(), spec.lag, spec.max_samples);
    let t = target_terms(y, &times, spec)?;
    te_given(x, &times, &t, spec)
}

/// Pairwise scores with `scores[q][p] = TE(x^p -> x^q)` and a zero diagonal.
///
/// The embedding length is the dataset's known lag when it has one, else
/// `spec.lag`.
pub fn te_matrix(dataset: &Dataset, spec: &GramSpec) -> Result<CausalMatrix> {
    let m = dataset.series();
    if m < 2 {
        return Err(Error::contract("te_matrix needs at least two series"));
    }
    let mut spec = *spec;
    if let Some(l) = dataset.known_lag {
        spec.lag = l;
    }
    let cols: Vec<Vec<f64>> = (0..m).map(|c| dataset.observations.column(c)).collect();
    check_series(&cols[0], &cols[1], &spec)?;
    let times = sample_times(dataset.len(), spec.lag, spec.max_samples);
    let mut scores = alloc::vec![0.0; m * m];
    for q in 0..m {
        let t = target_terms(&cols[q], &times, &spec)?;
        for p in (0..m).filter(|&p| p != q) {
            scores[q * m + p] = te_given(&cols[p], &times, &t, &spec)?;
        }
    }
    CausalMatrix::new(m, scores)
}

/// Best AUROC over [`SIGMA_GRID`] against `truth`, with the winning width.
pub fn best_te_auroc(dataset: &Dataset, truth: &Adjacency, spec: &GramSpec) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &sigma in &SIGMA_GRID {
        let s = te_matrix(dataset, &GramSpec { sigma, ..*spec })?;
        let a = auroc(&s, truth, true)?;
        if best.is_none_or(|(b, _)| a > b) {
            best = Some((a, sigma));
        }
    }
    Ok(best.expect("grid is non-empty"))
}
