//! Define-by-run reverse-mode tape.
//!
//! Every forward operation appends one node holding its output value and the
//! recipe for its vector-Jacobian product. Nodes are only ever appended, so the
//! recording order is already a topological order and `backward` simply walks
//! it in reverse.

use super::tensor::{gemm, transpose, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Maximum(Var, Var),
    Minimum(Var, Var),
    AddRow(Var, Var),
    MulScalar(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    PowScalar(Var, f64),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    Element(Var, usize),
    Reshape(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one scalar with respect to every node on a tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// Records a leaf. Its `requires_grad` flag decides whether gradients are
    /// propagated to it.
    pub fn leaf(&mut self, mut value: Tensor) -> Var {
        value.zero_grad();
        self.push(value, Op::Leaf)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value.with_requires_grad(false))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Gradient accumulated on `var` by previous [`Tape::backward`] calls.
    pub fn grad(&self, var: Var) -> Option<&[f64]> {
        self.nodes[var.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn emit(&mut self, shape: Vec<usize>, data: Vec<f64>, inputs: &[Var], op: Op) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        let t = Tensor::new(shape, data)
            .expect("op produced consistent shape")
            .with_requires_grad(rg);
        self.push(t, op)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let shape = self.shape(a).to_vec();
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        self.emit(shape, data, &[a], op)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let shape = self.shape(a).to_vec();
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.emit(shape, data, &[a, b], op))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).require_matrix("matmul")?;
        let (k2, n) = self.value(b).require_matrix("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let data = gemm(self.data(a), self.data(b), m, k, n);
        Ok(self.emit(vec![m, n], data, &[a, b], Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).require_matrix("transpose")?;
        let data = transpose(self.data(a), m, n);
        Ok(self.emit(vec![n, m], data, &[a], Op::Transpose(a)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("maximum", a, b, f64::max, Op::Maximum(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("minimum", a, b, f64::min, Op::Minimum(a, b))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("add_row")?;
        if self.value(row).numel() != n {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                left: vec![m, n],
                right: self.shape(row).to_vec(),
            });
        }
        let r = self.data(row);
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + r[i % n])
            .collect();
        Ok(self.emit(vec![m, n], data, &[x, row], Op::AddRow(x, row)))
    }

    pub fn mul_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::MulScalar(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// Natural log; the caller keeps inputs positive.
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn pow_scalar(&mut self, a: Var, p: f64) -> Var {
        self.unary(a, |x| x.powf(p), Op::PowScalar(a, p))
    }

    /// Clamps into `[lo, hi]`; gradient is zero where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).require_matrix("softmax_rows")?;
        let x = self.data(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &x[i * n..(i + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out[i * n..(i + 1) * n];
            let mut sum = 0.0;
            for (oj, &xj) in o.iter_mut().zip(row) {
                *oj = (xj - max).exp();
                sum += *oj;
            }
            o.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(self.emit(vec![m, n], out, &[a], Op::SoftmaxRows(a)))
    }

    /// Per-row normalization with the biased variance, then `gamma * x + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("layer_norm")?;
        if n < 2 {
            return Err(Error::invalid("x", "layer_norm needs at least 2 columns"));
        }
        for p in [gamma, beta] {
            if self.value(p).numel() != n {
                return Err(Error::ShapeMismatch {
                    op: "layer_norm",
                    left: vec![m, n],
                    right: self.shape(p).to_vec(),
                });
            }
        }
        let xs = self.data(x);
        let g = self.data(gamma);
        let b = self.data(beta);
        let mut normalized = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xs[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                normalized[i * n + j] = h;
                out[i * n + j] = g[j] * h + b[j];
            }
        }
        Ok(self.emit(
            vec![m, n],
            out,
            &[x, gamma, beta],
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
        ))
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::invalid("parts", "nothing to concatenate"))?;
        let (m, _) = self.value(first).require_matrix("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.value(p).require_matrix("concat_cols")?;
            if pm != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(first).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.data(p)[i * w..(i + 1) * w]);
            }
        }
        Ok(self.emit(vec![m, total], out, parts, Op::ConcatCols(parts.to_vec())))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.value(a).require_matrix("slice_rows")?;
        if start >= end || end > m {
            return Err(Error::invalid("range", format!("{start}..{end} of {m} rows")));
        }
        let data = self.data(a)[start * n..end * n].to_vec();
        Ok(self.emit(vec![end - start, n], data, &[a], Op::SliceRows(a, start)))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.value(a).require_matrix("slice_cols")?;
        if start >= end || end > n {
            return Err(Error::invalid("range", format!("{start}..{end} of {n} cols")));
        }
        let src = self.data(a);
        let mut data = Vec::with_capacity(m * (end - start));
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + end]);
        }
        Ok(self.emit(vec![m, end - start], data, &[a], Op::SliceCols(a, start, end)))
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let (m, n) = self.value(a).require_matrix("gather_rows")?;
        if indices.is_empty() {
            return Err(Error::invalid("indices", "empty selection"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(Error::IndexOutOfRange { index: bad, len: m });
        }
        let src = self.data(a);
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        Ok(self.emit(
            vec![indices.len(), n],
            data,
            &[a],
            Op::GatherRows(a, indices.to_vec()),
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.emit(vec![1], vec![s], &[a], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        self.emit(vec![1], vec![s], &[a], Op::Mean(a))
    }

    /// One element (flat row-major index) as a scalar.
    pub fn element(&mut self, a: Var, index: usize) -> Result<Var> {
        let len = self.value(a).numel();
        if index >= len {
            return Err(Error::IndexOutOfRange { index, len });
        }
        let v = self.data(a)[index];
        Ok(self.emit(vec![1], vec![v], &[a], Op::Element(a, index)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(a).numel() || shape.contains(&0) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape(a).to_vec(),
                right: shape.to_vec(),
            });
        }
        let data = self.data(a).to_vec();
        Ok(self.emit(shape.to_vec(), data, &[a], Op::Reshape(a)))
    }

    /// Gradients of the scalar `loss` with respect to every recorded node,
    /// without touching the tape's accumulated gradients.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].value.requires_grad() && idx != loss.0 {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Back-propagates `loss` and adds the result into every node's stored
    /// gradient. Repeated calls accumulate until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        for (node, g) in self.nodes.iter_mut().zip(&grads.grads) {
            if let Some(g) = g {
                if node.value.requires_grad() {
                    node.value.accumulate_grad(g);
                }
            }
        }
        Ok(grads)
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        let mut send = |v: Var, contrib: Vec<f64>| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(buf) => buf.iter_mut().zip(&contrib).for_each(|(b, c)| *b += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        let map = |f: &dyn Fn(usize, f64) -> f64| -> Vec<f64> {
            g.iter().enumerate().map(|(i, &gi)| f(i, gi)).collect()
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.rg(*a) {
                    let bt = transpose(self.data(*b), k, n);
                    send(*a, gemm(g, &bt, m, n, k));
                }
                if self.rg(*b) {
                    let at = transpose(self.data(*a), m, k);
                    send(*b, gemm(&at, g, k, m, n));
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                send(*a, transpose(g, n, m));
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                send(*a, map(&|i, gi| gi * bd[i]));
                send(*b, map(&|i, gi| gi * ad[i]));
            }
            Op::Div(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                send(*a, map(&|i, gi| gi / bd[i]));
                send(*b, map(&|i, gi| -gi * ad[i] / (bd[i] * bd[i])));
            }
            Op::Maximum(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                send(*a, map(&|i, gi| if ad[i] >= bd[i] { gi } else { 0.0 }));
                send(*b, map(&|i, gi| if ad[i] >= bd[i] { 0.0 } else { gi }));
            }
            Op::Minimum(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                send(*a, map(&|i, gi| if ad[i] <= bd[i] { gi } else { 0.0 }));
                send(*b, map(&|i, gi| if ad[i] <= bd[i] { 0.0 } else { gi }));
            }
            Op::AddRow(x, row) => {
                send(*x, g.to_vec());
                let n = self.value(*row).numel();
                let mut acc = vec![0.0; n];
                for (i, gi) in g.iter().enumerate() {
                    acc[i % n] += gi;
                }
                send(*row, acc);
            }
            Op::MulScalar(a, s) => send(*a, g.iter().map(|v| v * s).collect()),
            Op::AddScalar(a) => send(*a, g.to_vec()),
            Op::Relu(a) => {
                let ad = self.data(*a);
                send(*a, map(&|i, gi| if ad[i] > 0.0 { gi } else { 0.0 }));
            }
            Op::Sigmoid(a) => send(*a, map(&|i, gi| gi * out[i] * (1.0 - out[i]))),
            Op::Tanh(a) => send(*a, map(&|i, gi| gi * (1.0 - out[i] * out[i]))),
            Op::Exp(a) => send(*a, map(&|i, gi| gi * out[i])),
            Op::Log(a) => {
                let ad = self.data(*a);
                send(*a, map(&|i, gi| gi / ad[i]));
            }
            Op::PowScalar(a, p) => {
                let ad = self.data(*a);
                send(*a, map(&|i, gi| gi * p * ad[i].powf(p - 1.0)));
            }
            Op::Clamp(a, lo, hi) => {
                let ad = self.data(*a);
                send(
                    *a,
                    map(&|i, gi| if ad[i] < *lo || ad[i] > *hi { 0.0 } else { gi }),
                );
            }
            Op::SoftmaxRows(a) => {
                let n = self.shape(*a)[1];
                let mut dx = vec![0.0; g.len()];
                for (r, (gr, yr)) in g.chunks(n).zip(out.chunks(n)).enumerate() {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dx[r * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                send(*a, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let n = self.shape(*x)[1];
                let gam = self.data(*gamma);
                let mut dgamma = vec![0.0; n];
                let mut dbeta = vec![0.0; n];
                let mut dx = vec![0.0; g.len()];
                for (r, gr) in g.chunks(n).enumerate() {
                    let h = &normalized[r * n..(r + 1) * n];
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..n {
                        dgamma[j] += gr[j] * h[j];
                        dbeta[j] += gr[j];
                        let dh = gr[j] * gam[j];
                        mean_dh += dh;
                        mean_dh_h += dh * h[j];
                    }
                    mean_dh /= n as f64;
                    mean_dh_h /= n as f64;
                    for j in 0..n {
                        let dh = gr[j] * gam[j];
                        dx[r * n + j] = inv_std[r] * (dh - mean_dh - h[j] * mean_dh_h);
                    }
                }
                send(*x, dx);
                send(*gamma, dgamma);
                send(*beta, dbeta);
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let m = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(m * w);
                        for i in 0..m {
                            d.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        send(p, d);
                    }
                    offset += w;
                }
            }
            Op::SliceRows(a, start) => {
                let n = self.shape(*a)[1];
                let mut d = vec![0.0; self.value(*a).numel()];
                d[start * n..start * n + g.len()].copy_from_slice(g);
                send(*a, d);
            }
            Op::SliceCols(a, start, end) => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                let w = end - start;
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    d[i * n + start..i * n + end].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                send(*a, d);
            }
            Op::GatherRows(a, indices) => {
                let n = self.shape(*a)[1];
                let mut d = vec![0.0; self.value(*a).numel()];
                for (r, &src) in indices.iter().enumerate() {
                    for j in 0..n {
                        d[src * n + j] += g[r * n + j];
                    }
                }
                send(*a, d);
            }
            Op::Sum(a) => send(*a, vec![g[0]; self.value(*a).numel()]),
            Op::Mean(a) => {
                let len = self.value(*a).numel();
                send(*a, vec![g[0] / len as f64; len]);
            }
            Op::Element(a, index) => {
                let mut d = vec![0.0; self.value(*a).numel()];
                d[*index] = g[0];
                send(*a, d);
            }
            Op::Reshape(a) => send(*a, g.to_vec()),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
