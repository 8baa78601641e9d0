use alloc::vec::Vec;

use crate::numcore::{Rng, Tensor};
use crate::{Error, Result};

/// Kernel widths `sigma` averaged over by [`mmd`].
pub const MMD_BANDWIDTHS: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Window length used for MMD and point-cloud export.
pub const EVAL_WINDOW: usize = 20;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Biased (V-statistic) squared MMD between two equally sized sample sets
/// (rows), with Gaussian kernels `exp(-d^2 / (2 sigma^2))`, averaged over
/// `bandwidths`.
pub fn mmd(real: &Tensor, synth: &Tensor, bandwidths: &[f64]) -> Result<f64> {
    if real.rows() != synth.rows() {
        return Err(Error::contract(alloc::format!(
            "mmd needs equal sample counts, got {} and {}",
            real.rows(),
            synth.rows()
        )));
    }
    if real.cols() != synth.cols() {
        return Err(Error::shape("mmd", real.shape(), synth.shape()));
    }
    if bandwidths.is_empty() || bandwidths.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::contract("mmd bandwidths must be positive"));
    }
    let n = real.rows();
    let dists = |a: &Tensor, b: &Tensor| -> Vec<f64> {
        let mut d = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                d.push(sq_dist(a.row_slice(i), b.row_slice(j)));
            }
        }
        d
    };
    let (xx, yy, xy) = (dists(real, real), dists(synth, synth), dists(real, synth));
    let nn = (n * n) as f64;
    let mut total = 0.0;
    for &s in bandwidths {
        let k = |d: &[f64]| d.iter().map(|&d| libm::exp(-d / (2.0 * s * s))).sum::<f64>() / nn;
        total += k(&xx) + k(&yy) - 2.0 * k(&xy);
    }
    Ok(total / bandwidths.len() as f64)
}

/// `count` windows of `len` consecutive rows drawn uniformly from `series`,
/// each flattened row-major into one row of the result.
pub fn sample_flat_windows(series: &Tensor, len: usize, count: usize, rng: &mut Rng) -> Result<Tensor> {
    if len == 0 || series.rows() < len || count == 0 {
        return Err(Error::contract(alloc::format!(
            "cannot draw {count} windows of length {len} from {} rows",
            series.rows()
        )));
    }
    let starts = series.rows() - len + 1;
    let mut data = Vec::with_capacity(count * len * series.cols());
    for _ in 0..count {
        let s = rng.below(starts);
        data.extend_from_slice(series.slice_rows(s, len)?.data());
    }
    Tensor::matrix(count, len * series.cols(), data)
}

/// Stacks whole sequences (each `len x M`) as flattened rows.
pub fn flatten_sequences(seqs: &[Tensor]) -> Result<Tensor> {
    let first = seqs.first().ok_or_else(|| Error::contract("no sequences"))?;
    let d = first.numel();
    let mut data = Vec::with_capacity(seqs.len() * d);
    for s in seqs {
        if s.numel() != d {
            return Err(Error::shape("flatten_sequences", first.shape(), s.shape()));
        }
        data.extend_from_slice(s.data());
    }
    Tensor::matrix(seqs.len(), d, data)
}
