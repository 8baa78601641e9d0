use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{Adjacency, Dataset};
use crate::numcore::{Rng, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarConfig {
    pub m: usize,
    pub lag: usize,
    pub length: usize,
    /// Fraction of off-diagonal causes per row; self-dependence is always on.
    pub density: f64,
    /// Coefficient magnitudes are drawn from `[lo, hi]` with random sign.
    pub magnitude: (f64, f64),
    pub burn_in: usize,
    pub max_rescales: usize,
}

impl Default for VarConfig {
    fn default() -> Self {
        VarConfig {
            m: 10,
            lag: 3,
            length: 2048,
            density: 0.2,
            magnitude: (0.2, 0.5),
            burn_in: 100,
            max_rescales: 200,
        }
    }
}

/// `x_t = sum_k A_k x_{t-k} + eps_t` with `eps_t ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarSystem {
    /// `A_1 .. A_lag`, each `M x M` with rows indexed by the effect.
    pub coeffs: Vec<Tensor>,
}

impl VarSystem {
    pub fn series(&self) -> usize {
        self.coeffs[0].rows()
    }

    pub fn lag(&self) -> usize {
        self.coeffs.len()
    }

    /// Nonzero pattern of `A_1 + .. + A_lag`.
    pub fn truth(&self) -> Adjacency {
        let m = self.series();
        let mut a = Adjacency::empty(m);
        for i in 0..m {
            for j in 0..m {
                a.set(i, j, self.coeffs.iter().any(|c| c.get(i, j) != 0.0));
            }
        }
        a
    }

    /// Block companion matrix of size `(M lag) x (M lag)`.
    pub fn companion(&self) -> DMatrix<f64> {
        let (m, l) = (self.series(), self.lag());
        let mut c = DMatrix::zeros(m * l, m * l);
        for (k, a) in self.coeffs.iter().enumerate() {
            for i in 0..m {
                for j in 0..m {
                    c[(i, k * m + j)] = a.get(i, j);
                }
            }
        }
        for i in m..m * l {
            c[(i, i - m)] = 1.0;
        }
        c
    }

    /// Runs the recursion from zero history over the given innovations
    /// (`T x M`), returning `T x M` states.
    pub fn simulate_with(&self, noise: &Tensor) -> Result<Tensor> {
        let m = self.series();
        if noise.cols() != m {
            return Err(Error::shape("VarSystem::simulate_with", &[m], noise.shape()));
        }
        let t = noise.rows();
        let mut out = vec![0.0; t * m];
        for s in 0..t {
            for i in 0..m {
                let mut v = noise.get(s, i);
                for (k, a) in self.coeffs.iter().enumerate() {
                    if s > k {
                        let past = &out[(s - k - 1) * m..(s - k) * m];
                        v += a.row_slice(i).iter().zip(past).map(|(c, x)| c * x).sum::<f64>();
                    }
                }
                out[s * m + i] = v;
            }
        }
        Tensor::matrix(t, m, out)
    }
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| libm::hypot(z.re, z.im))
        .fold(0.0, f64::max)
}

/// Sparse stable VAR with shared support across lags.
pub fn gen_var(cfg: &VarConfig, rng: &mut Rng) -> Result<Dataset> {
    let (m, lag) = (cfg.m, cfg.lag);
    if m < 2 || lag == 0 || cfg.length < 100 {
        return Err(Error::contract("var needs m >= 2, lag >= 1 and length >= 100"));
    }
    let others = libm::round(cfg.density * (m - 1) as f64) as usize;
    let mut support = vec![false; m * m];
    for i in 0..m {
        support[i * m + i] = true;
        let mut cands: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        rng.shuffle(&mut cands);
        for &j in cands.iter().take(others.min(m - 1)) {
            support[i * m + j] = true;
        }
    }
    let (lo, hi) = cfg.magnitude;
    let mut coeffs: Vec<Tensor> = (0..lag)
        .map(|_| {
            let data = support
                .iter()
                .map(|&on| {
                    if !on {
                        return 0.0;
                    }
                    let mag = rng.uniform_range(lo, hi);
                    if rng.uniform() < 0.5 {
                        -mag
                    } else {
                        mag
                    }
                })
                .collect();
            Tensor::matrix(m, m, data).expect("positive extents")
        })
        .collect();

    let mut sys = VarSystem { coeffs: coeffs.clone() };
    let mut tries = 0;
    while spectral_radius(&sys.companion()) >= 0.95 {
        tries += 1;
        if tries > cfg.max_rescales {
            return Err(Error::Generation(format!(
                "VAR coefficients still unstable after {} rescales",
                cfg.max_rescales
            )));
        }
        for c in &mut coeffs {
            *c = c.scale(0.95);
        }
        sys = VarSystem { coeffs: coeffs.clone() };
    }

    let total = cfg.burn_in + cfg.length;
    let noise = Tensor::matrix(total, m, (0..total * m).map(|_| rng.normal()).collect())?;
    let states = sys.simulate_with(&noise)?;
    let obs = states.slice_rows(cfg.burn_in, cfg.length)?;
    let mut d = Dataset::new(format!("var-m{m}-lag{lag}"), obs);
    d.truth = Some(sys.truth());
    d.known_lag = Some(lag);
    Ok(d)
}
