//! Benchmark systems with known Granger graphs and per-column scaling.

mod henon;
mod lorenz;
mod var;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use henon::{gen_henon, henon_truth, HenonConfig};
pub use lorenz::{gen_lorenz96, lorenz96_derivative, lorenz96_truth, rk4_step, LorenzConfig};
pub use var::{gen_var, spectral_radius, VarConfig, VarSystem};

use crate::numcore::Tensor;
use crate::{Error, Result};

/// Binary `M x M` graph; entry `(effect, cause)` is set when `cause`
/// Granger-causes `effect`. Self-loops are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    m: usize,
    edges: Vec<bool>,
}

impl Adjacency {
    pub fn empty(m: usize) -> Self {
        Adjacency {
            m,
            edges: alloc::vec![false; m * m],
        }
    }

    pub fn new(m: usize, edges: Vec<bool>) -> Result<Self> {
        if m == 0 || edges.len() != m * m {
            return Err(Error::contract("adjacency must be square and non-empty"));
        }
        Ok(Adjacency { m, edges })
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != rows.len()) {
            return Err(Error::contract("adjacency rows must be square"));
        }
        Self::new(rows.len(), rows.concat())
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, effect: usize, cause: usize) -> bool {
        self.edges[effect * self.m + cause]
    }

    pub fn set(&mut self, effect: usize, cause: usize, on: bool) {
        self.edges[effect * self.m + cause] = on;
    }

    pub fn edges(&self) -> &[bool] {
        &self.edges
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }
}

/// A `T x M` observation matrix with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub observations: Tensor,
    pub truth: Option<Adjacency>,
    pub known_lag: Option<usize>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, observations: Tensor) -> Self {
        Dataset {
            name: name.into(),
            observations,
            truth: None,
            known_lag: None,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn series(&self) -> usize {
        self.observations.cols()
    }
}

/// Per-column affine map onto `[0, 1]` and back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    /// Column ranges of `x`; fails on a constant column.
    pub fn fit(x: &Tensor) -> Result<Self> {
        let m = x.cols();
        let mut min = alloc::vec![f64::INFINITY; m];
        let mut max = alloc::vec![f64::NEG_INFINITY; m];
        for r in 0..x.rows() {
            for (c, &v) in x.row_slice(r).iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        if let Some(column) = (0..m).find(|&c| !(max[c] > min[c])) {
            return Err(Error::ConstantColumn { column });
        }
        Ok(Scaler { min, max })
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.min.len() {
            return Err(Error::shape("scaler", &[self.min.len()], x.shape()));
        }
        Ok(())
    }

    pub fn transform(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_slice_mut(r).iter_mut().enumerate() {
                *v = (*v - self.min[c]) / (self.max[c] - self.min[c]);
            }
        }
        Ok(out)
    }

    pub fn inverse(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_slice_mut(r).iter_mut().enumerate() {
                *v = self.min[c] + *v * (self.max[c] - self.min[c]);
            }
        }
        Ok(out)
    }
}

/// Scales every column to `[0, 1]`, returning the scaled dataset and the
/// fitted ranges for the inverse map.
pub fn normalize_minmax(dataset: &Dataset) -> Result<(Dataset, Scaler)> {
    let scaler = Scaler::fit(&dataset.observations)?;
    let mut out = dataset.clone();
    out.observations = scaler.transform(&dataset.observations)?;
    Ok((out, scaler))
}
