use alloc::format;
use alloc::vec::Vec;

use crate::numcore::{Rng, Tensor};
use crate::{Error, Result};

/// Number of distinct contiguous windows of `2 tau + 2` steps in `t` steps.
pub fn admissible_windows(t: usize, tau: usize) -> usize {
    let len = 2 * tau + 2;
    if t < len {
        0
    } else {
        t - len + 1
    }
}

/// `batch_size` windows of `2 tau + 2` consecutive rows, start indices drawn
/// uniformly (with replacement) from every admissible position.
pub fn sample_windows(data: &Tensor, tau: usize, batch_size: usize, rng: &mut Rng) -> Result<Vec<Tensor>> {
    let n = admissible_windows(data.rows(), tau);
    if n == 0 {
        return Err(Error::contract(format!(
            "series of length {} is shorter than one window ({})",
            data.rows(),
            2 * tau + 2
        )));
    }
    if batch_size == 0 {
        return Err(Error::contract("batch_size must be positive"));
    }
    (0..batch_size)
        .map(|_| data.slice_rows(rng.below(n), 2 * tau + 2))
        .collect()
}
