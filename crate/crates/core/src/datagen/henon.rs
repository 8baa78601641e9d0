use alloc::format;
use alloc::vec::Vec;

use super::{Adjacency, Dataset};
use crate::numcore::{Rng, Tensor};
use crate::{Error, Result};

/// Chain of `k` coupled Hénon maps driven by the first one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HenonConfig {
    pub k: usize,
    pub length: usize,
    /// Coupling strength `e`.
    pub coupling: f64,
    pub burn_in: usize,
    pub retries: usize,
}

impl Default for HenonConfig {
    fn default() -> Self {
        HenonConfig {
            k: 6,
            length: 2048,
            coupling: 0.3,
            burn_in: 500,
            retries: 10,
        }
    }
}

/// Next state of every map from the two previous states:
/// `x1' = 1.4 - x1^2 + 0.3 x1_prev`,
/// `xp' = 1.4 - (e x(p-1) + (1 - e) xp)^2 + 0.3 xp_prev`.
pub fn henon_step(cur: &[f64], prev: &[f64], e: f64, next: &mut [f64]) {
    for p in 0..cur.len() {
        let drive = if p == 0 { cur[0] } else { e * cur[p - 1] + (1.0 - e) * cur[p] };
        next[p] = 1.4 - drive * drive + 0.3 * prev[p];
    }
}

/// Self-loops plus `p-1 -> p`.
pub fn henon_truth(k: usize) -> Adjacency {
    let mut a = Adjacency::empty(k);
    for p in 0..k {
        a.set(p, p, true);
        if p > 0 {
            a.set(p, p - 1, true);
        }
    }
    a
}

pub fn gen_henon(cfg: &HenonConfig, rng: &mut Rng) -> Result<Dataset> {
    if cfg.k < 2 || cfg.length == 0 {
        return Err(Error::contract("henon needs k >= 2 and a positive length"));
    }
    let k = cfg.k;
    'attempt: for _ in 0..=cfg.retries {
        let mut prev: Vec<f64> = (0..k).map(|_| rng.uniform_range(0.0, 0.1)).collect();
        let mut cur: Vec<f64> = (0..k).map(|_| rng.uniform_range(0.0, 0.1)).collect();
        let mut next = alloc::vec![0.0; k];
        let mut out = Vec::with_capacity(cfg.length * k);
        for step in 0..cfg.burn_in + cfg.length {
            henon_step(&cur, &prev, cfg.coupling, &mut next);
            if next.iter().any(|x| !x.is_finite() || x.abs() > 1e6) {
                continue 'attempt;
            }
            prev.copy_from_slice(&cur);
            cur.copy_from_slice(&next);
            if step >= cfg.burn_in {
                out.extend_from_slice(&cur);
            }
        }
        let mut d = Dataset::new(format!("henon-k{k}"), Tensor::matrix(cfg.length, k, out)?);
        d.truth = Some(henon_truth(k));
        d.known_lag = Some(2);
        return Ok(d);
    }
    Err(Error::Generation(format!(
        "henon diverged on {} attempts",
        cfg.retries + 1
    )))
}
