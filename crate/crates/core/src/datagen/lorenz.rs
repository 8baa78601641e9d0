use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Adjacency, Dataset};
use crate::numcore::{Rng, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorenzConfig {
    pub p: usize,
    pub length: usize,
    pub forcing: f64,
    pub dt: f64,
    pub burn_in: usize,
}

impl Default for LorenzConfig {
    fn default() -> Self {
        LorenzConfig {
            p: 10,
            length: 2048,
            forcing: 10.0,
            dt: 0.05,
            burn_in: 1000,
        }
    }
}

/// `dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F` with cyclic indices.
pub fn lorenz96_derivative(x: &[f64], forcing: f64, out: &mut [f64]) {
    let p = x.len();
    for i in 0..p {
        let ip1 = x[(i + 1) % p];
        let im1 = x[(i + p - 1) % p];
        let im2 = x[(i + p - 2) % p];
        out[i] = (ip1 - im2) * im1 - x[i] + forcing;
    }
}

/// Classic fourth-order Runge-Kutta step in place.
pub fn rk4_step(x: &mut [f64], forcing: f64, dt: f64) {
    let p = x.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; p], vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    let mut tmp = vec![0.0; p];
    lorenz96_derivative(x, forcing, &mut k1);
    for i in 0..p {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    lorenz96_derivative(&tmp, forcing, &mut k2);
    for i in 0..p {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    lorenz96_derivative(&tmp, forcing, &mut k3);
    for i in 0..p {
        tmp[i] = x[i] + dt * k3[i];
    }
    lorenz96_derivative(&tmp, forcing, &mut k4);
    for i in 0..p {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Row `i` depends on `i-2, i-1, i, i+1` (cyclic).
pub fn lorenz96_truth(p: usize) -> Adjacency {
    let mut a = Adjacency::empty(p);
    for i in 0..p {
        for d in [p - 2, p - 1, 0, 1] {
            a.set(i, (i + d) % p, true);
        }
    }
    a
}

pub fn gen_lorenz96(cfg: &LorenzConfig, rng: &mut Rng) -> Result<Dataset> {
    if cfg.p < 4 || cfg.length == 0 || !(cfg.dt > 0.0) {
        return Err(Error::contract("lorenz96 needs p >= 4, a positive length and dt > 0"));
    }
    let mut x: Vec<f64> = (0..cfg.p).map(|_| cfg.forcing + 0.01 * rng.normal()).collect();
    let mut out = Vec::with_capacity(cfg.length * cfg.p);
    for step in 0..cfg.burn_in + cfg.length {
        rk4_step(&mut x, cfg.forcing, cfg.dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Generation(format!("lorenz96 state became non-finite at step {step}")));
        }
        if step >= cfg.burn_in {
            out.extend_from_slice(&x);
        }
    }
    let mut d = Dataset::new(format!("lorenz96-p{}", cfg.p), Tensor::matrix(cfg.length, cfg.p, out)?);
    d.truth = Some(lorenz96_truth(cfg.p));
    d.known_lag = Some(1);
    Ok(d)
}
