use alloc::vec;
use alloc::vec::Vec;

use super::gemm::{gemm, MatRef};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `x * w^T`
    Linear(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Cols(Var, usize),
    ConcatCols(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Define-by-run record of a computation.
///
/// Nodes are appended in evaluation order, so every parent index precedes
/// its children and a single reverse sweep computes all gradients. Build a
/// fresh tape per minibatch.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: gradients flow into it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Constant leaf (data, noise): no gradient is computed for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Drops every node recorded after the first `len`; vars past that point
    /// become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    /// `x * w^T` for `x: B x in`, `w: out x in`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (b, k) = (xv.rows(), xv.cols());
        let (n, k2) = (wv.rows(), wv.cols());
        if k != k2 {
            return Err(Error::shape("linear", xv.shape(), wv.shape()));
        }
        let mut out = vec![0.0; b * n];
        gemm(
            1.0,
            MatRef::new(xv.data(), b, k),
            MatRef::new(wv.data(), n, k).t(),
            0.0,
            &mut out,
        );
        let value = Tensor::matrix(b, n, out)?;
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(Op::Linear(x, w), value, rg))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.value(a).zip_map(self.value(b), name, f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), v, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Sub(a, b), v, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a, b), v, rg))
    }

    /// Adds a `1 x n` row to every row of an `m x n` tensor.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::shape("add_row", av.shape(), rv.shape()));
        }
        let n = av.cols();
        let mut out = av.clone();
        for r in out.data_mut().chunks_mut(n) {
            for (o, &b) in r.iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(Op::AddRow(a, row), out, rg))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let v = self.value(a).map(|x| scale * x + shift);
        let rg = self.rg(a);
        Ok(self.push(Op::Affine(a, scale), v, rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.affine(a, c, 0.0)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(libm::tanh);
        let rg = self.rg(a);
        Ok(self.push(Op::Tanh(a), v, rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        Ok(self.push(Op::Sigmoid(a), v, rg))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(libm::exp);
        if let Some(&bad) = self
            .value(a)
            .data()
            .iter()
            .zip(v.data())
            .find(|(_, y)| !y.is_finite())
            .map(|(x, _)| x)
        {
            return Err(Error::Domain { op: "exp", value: bad });
        }
        let rg = self.rg(a);
        Ok(self.push(Op::Exp(a), v, rg))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| x <= 0.0 || x.is_nan()) {
            return Err(Error::Domain { op: "log", value: bad });
        }
        let v = self.value(a).map(libm::log);
        let rg = self.rg(a);
        Ok(self.push(Op::Log(a), v, rg))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        Ok(self.push(Op::Square(a), v, rg))
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        Ok(self.push(Op::Sum(a), v, rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Columns `start..start + len` of a rank-2 tensor.
    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        let (m, n) = (av.rows(), av.cols());
        if len == 0 || start + len > n {
            return Err(Error::contract(alloc::format!(
                "column slice {start}..{} out of range for {n} columns",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&av.data()[r * n + start..r * n + start + len]);
        }
        let v = Tensor::matrix(m, len, out)?;
        let rg = self.rg(a);
        Ok(self.push(Op::Cols(a, start), v, rg))
    }

    /// Side-by-side concatenation of rank-2 tensors with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("concat_cols of zero tensors"))?;
        let m = self.value(first).rows();
        let mut total = 0;
        for &p in parts {
            if self.value(p).rows() != m {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            total += self.value(p).cols();
        }
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let v = Tensor::matrix(m, total, out)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Op::ConcatCols(parts.to_vec()), v, rg))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(alloc::format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::ones(self.shape(loss)));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, nn) = (av.rows(), av.cols(), bv.cols());
                    if self.rg(*a) {
                        let ga = slot(&mut grads, *a, av.shape());
                        gemm(
                            1.0,
                            MatRef::new(g.data(), m, nn),
                            MatRef::new(bv.data(), k, nn).t(),
                            1.0,
                            ga.data_mut(),
                        );
                    }
                    if self.rg(*b) {
                        let gb = slot(&mut grads, *b, bv.shape());
                        gemm(
                            1.0,
                            MatRef::new(av.data(), m, k).t(),
                            MatRef::new(g.data(), m, nn),
                            1.0,
                            gb.data_mut(),
                        );
                    }
                }
                Op::Linear(x, w) => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (bsz, k, out) = (xv.rows(), xv.cols(), wv.rows());
                    if self.rg(*x) {
                        let gx = slot(&mut grads, *x, xv.shape());
                        gemm(
                            1.0,
                            MatRef::new(g.data(), bsz, out),
                            MatRef::new(wv.data(), out, k),
                            1.0,
                            gx.data_mut(),
                        );
                    }
                    if self.rg(*w) {
                        let gw = slot(&mut grads, *w, wv.shape());
                        gemm(
                            1.0,
                            MatRef::new(g.data(), bsz, out).t(),
                            MatRef::new(xv.data(), bsz, k),
                            1.0,
                            gw.data_mut(),
                        );
                    }
                }
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, &g, 1.0);
                    self.acc(&mut grads, *b, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    self.acc(&mut grads, *a, &g, 1.0);
                    self.acc(&mut grads, *b, &g, -1.0);
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        let local = g.zip_map(self.value(*b), "mul", |d, y| d * y)?;
                        self.acc(&mut grads, *a, &local, 1.0);
                    }
                    if self.rg(*b) {
                        let local = g.zip_map(self.value(*a), "mul", |d, x| d * x)?;
                        self.acc(&mut grads, *b, &local, 1.0);
                    }
                }
                Op::AddRow(a, row) => {
                    self.acc(&mut grads, *a, &g, 1.0);
                    if self.rg(*row) {
                        let ncols = g.cols();
                        let gr = slot(&mut grads, *row, self.shape(*row));
                        for r in g.data().chunks(ncols) {
                            for (o, &d) in gr.data_mut().iter_mut().zip(r) {
                                *o += d;
                            }
                        }
                    }
                }
                Op::Affine(a, s) => self.acc(&mut grads, *a, &g, *s),
                Op::Tanh(a) => {
                    let local = g.zip_map(&node.value, "tanh", |d, y| d * (1.0 - y * y))?;
                    self.acc(&mut grads, *a, &local, 1.0);
                }
                Op::Sigmoid(a) => {
                    let local = g.zip_map(&node.value, "sigmoid", |d, y| d * y * (1.0 - y))?;
                    self.acc(&mut grads, *a, &local, 1.0);
                }
                Op::Exp(a) => {
                    let local = g.zip_map(&node.value, "exp", |d, y| d * y)?;
                    self.acc(&mut grads, *a, &local, 1.0);
                }
                Op::Log(a) => {
                    let local = g.zip_map(self.value(*a), "log", |d, x| d / x)?;
                    self.acc(&mut grads, *a, &local, 1.0);
                }
                Op::Square(a) => {
                    let local = g.zip_map(self.value(*a), "square", |d, x| 2.0 * d * x)?;
                    self.acc(&mut grads, *a, &local, 1.0);
                }
                Op::Sum(a) => {
                    if self.rg(*a) {
                        let d = g.data()[0];
                        let ga = slot(&mut grads, *a, self.shape(*a));
                        for o in ga.data_mut() {
                            *o += d;
                        }
                    }
                }
                Op::Cols(a, start) => {
                    if self.rg(*a) {
                        let n_src = self.value(*a).cols();
                        let len = g.cols();
                        let ga = slot(&mut grads, *a, self.shape(*a));
                        for (r, src) in g.data().chunks(len).enumerate() {
                            let dst = &mut ga.data_mut()[r * n_src + start..r * n_src + start + len];
                            for (o, &d) in dst.iter_mut().zip(src) {
                                *o += d;
                            }
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.rg(p) {
                            let gp = slot(&mut grads, p, self.shape(p));
                            for (r, src) in g.data().chunks(total).enumerate() {
                                let dst = &mut gp.data_mut()[r * w..(r + 1) * w];
                                for (o, &d) in dst.iter_mut().zip(&src[offset..offset + w]) {
                                    *o += d;
                                }
                            }
                        }
                        offset += w;
                    }
                }
            }
            // keep leaf gradients for the caller
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: &Tensor, c: f64) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (o, &d) in existing.data_mut().iter_mut().zip(g.data()) {
                    *o += c * d;
                }
            }
            slot @ None => {
                *slot = Some(if c == 1.0 { g.clone() } else { g.scale(c) });
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}

/// Compares analytic gradients of a scalar function against central
/// differences, returning `max |analytic - numeric| / max(1, |analytic|)`
/// over every coordinate of every parameter. A NaN anywhere yields infinity.
pub fn check_gradient<F>(f: F, params: &[Tensor], epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::contract("check_gradient: epsilon must lie in (0, 1e-2]"));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v);
        for k in 0..work[pi].numel() {
            let orig = work[pi].data()[k];
            work[pi].data_mut()[k] = orig + epsilon;
            let up = eval(&work)?;
            work[pi].data_mut()[k] = orig - epsilon;
            let down = eval(&work)?;
            work[pi].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic.data()[k];
            let err = (a - numeric).abs() / f64::max(1.0, a.abs());
            if err.is_nan() {
                return Ok(f64::INFINITY);
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn rand_tensor(rng: &mut Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn elementwise_reference_values() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(&[0.0, 0.5]));
        let th = t.tanh(x).unwrap();
        let sg = t.sigmoid(x).unwrap();
        assert_eq!(t.value(th).data()[0], 0.0);
        assert!((t.value(th).data()[1] - 0.46211715726000974).abs() < 1e-12);
        assert_eq!(t.value(sg).data()[0], 0.5);
    }

    #[test]
    fn log_of_nonpositive_is_domain_error() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(&[1.0, 0.0]));
        assert!(matches!(t.log(x), Err(Error::Domain { op: "log", .. })));
    }

    #[test]
    fn backward_identity_square_and_unreachable() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(3.0));
        let y = t.param(Tensor::scalar(-2.0));
        let g = t.backward(x).unwrap();
        assert_eq!(g.get(x).data(), &[1.0]);
        let sq = t.square(x).unwrap();
        let g = t.backward(sq).unwrap();
        assert_eq!(g.get(x).data(), &[6.0]);
        assert_eq!(g.get(y).data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.param(Tensor::row(&[1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn quadratic_gradient_check() {
        // f(x) = sum(x^2) + 3 * x0
        let p = Tensor::row(&[0.3, -1.2, 2.0]);
        let err = check_gradient(
            |t, v| {
                let sq = t.square(v[0])?;
                let s = t.sum(sq)?;
                let c = t.constant(Tensor::row(&[3.0, 0.0, 0.0]));
                let lin = t.mul(v[0], c)?;
                let l = t.sum(lin)?;
                t.add(s, l)
            },
            &[p],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let p = Tensor::row(&[1.0, 2.0]);
        let err = check_gradient(
            |t, v| {
                let z = t.scale(v[0], 0.0)?;
                t.sum(z)
            },
            &[p.clone()],
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
        let mut t = Tape::new();
        let v = t.param(p);
        let z = t.scale(v, 0.0).unwrap();
        let s = t.sum(z).unwrap();
        assert_eq!(t.backward(s).unwrap().get(v).max_abs(), 0.0);
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = Rng::new(11);
        let a = rand_tensor(&mut rng, 3, 4);
        let b = rand_tensor(&mut rng, 4, 2);
        let w = rand_tensor(&mut rng, 5, 4);
        let row = rand_tensor(&mut rng, 1, 5);
        let pos = rand_tensor(&mut rng, 3, 4).map(|x| x.abs() + 0.5);
        let err = check_gradient(
            |t, v| {
                let mm = t.matmul(v[0], v[1])?; // 3x2
                let lin = t.linear(v[0], v[2])?; // 3x5
                let lin = t.add_row(lin, v[3])?;
                let th = t.tanh(lin)?;
                let sg = t.sigmoid(mm)?;
                let ex = t.exp(sg)?;
                let lg = t.log(v[4])?;
                let prod = t.mul(lg, v[0])?;
                let diff = t.sub(prod, v[0])?;
                let sq = t.square(diff)?;
                let c1 = t.cols(th, 1, 3)?;
                let cat = t.concat_cols(&[c1, ex])?; // 3x5
                let af = t.affine(cat, 0.7, 0.1)?;
                let s1 = t.sum(af)?;
                let s2 = t.mean(sq)?;
                let tot = t.add(s1, s2)?;
                t.square(tot)
            },
            &[a, b, w, row, pos],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn replay_is_bitwise_deterministic() {
        let run = || {
            let mut rng = Rng::new(5);
            let mut t = Tape::new();
            let x = t.param(rand_tensor(&mut rng, 4, 3));
            let w = t.param(rand_tensor(&mut rng, 2, 3));
            let y = t.linear(x, w).unwrap();
            let y = t.tanh(y).unwrap();
            let s = t.sum(y).unwrap();
            let g = t.backward(s).unwrap();
            (t.value(s).clone(), g.get(w))
        };
        let (a, ga) = run();
        let (b, gb) = run();
        assert_eq!(a.data()[0].to_bits(), b.data()[0].to_bits());
        assert!(ga.data().iter().zip(gb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
