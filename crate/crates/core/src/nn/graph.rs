//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value; [`Graph::backward`]
//! walks the tape in reverse accumulating gradients. Leaves created with
//! [`Graph::constant`] (and everything computed only from constants) are
//! skipped during the backward pass.

use super::gemm;
use super::Tensor;
use crate::{Error, Result};

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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Abs(Var),
    Square(Var),
    Sqrt(Var),
    Exp(Var),
    Tanh(Var),
    Sigmoid(Var),
    Silu(Var),
    MaxConst(Var, f64),
    AddRow(Var, Var),
    AddScalarVar(Var, Var),
    MulScalarVar(Var, Var),
    MatMul(Var, Var),
    Conv1d { x: Var, w: Var, dilation: usize },
    Conv2d { x: Var, w: Var, b: Var },
    AvgPool2(Var),
    GlobalAvgPool(Var),
    SoftmaxRows(Var),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients(Vec<Option<Vec<f64>>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.0.get(v.0).and_then(|g| g.as_deref())
    }

    /// The gradient of `v`, or zeros of length `len` when nothing reached it.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len])
    }
}

fn mismatch(a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        expected: a.to_vec(),
        found: b.to_vec(),
    }
}

fn dims2(t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::invalid(format!("expected a matrix, got shape {:?}", t.shape()))),
    }
}

fn dims3(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::invalid(format!(
            "expected a rank-3 tensor, got shape {:?}",
            t.shape()
        ))),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(value, op, needs)
    }

    /// A differentiable leaf.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = &self.nodes[a.0].value;
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect()).expect("same shape");
        self.derived(out, op, &[a])
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(mismatch(ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.derived(out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Shift(a), |x| x + c)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, Op::Abs(a), f64::abs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, Op::Square(a), |x| x * x)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), f64::exp)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.map(a, Op::Silu(a), |x| x * sigmoid(x))
    }

    /// Elementwise `max(x, c)`.
    pub fn max_const(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::MaxConst(a, c), |x| x.max(c))
    }

    /// Adds the vector `b` to every row (last axis) of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let d = tb.len();
        if tb.rank() != 1 || ta.shape().last() != Some(&d) {
            return Err(mismatch(ta.shape(), tb.shape()));
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(d) {
            for (x, y) in row.iter_mut().zip(tb.data()) {
                *x += y;
            }
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.derived(out, Op::AddRow(a, b), &[a, b]))
    }

    fn scalar_of(&self, s: Var) -> Result<f64> {
        let t = &self.nodes[s.0].value;
        if t.len() != 1 {
            return Err(mismatch(&[1], t.shape()));
        }
        Ok(t.data()[0])
    }

    /// `a + s` for a one-element `s`.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let c = self.scalar_of(s)?;
        let t = &self.nodes[a.0].value;
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x + c).collect())?;
        Ok(self.derived(out, Op::AddScalarVar(a, s), &[a, s]))
    }

    /// `a · s` for a one-element `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let c = self.scalar_of(s)?;
        let t = &self.nodes[a.0].value;
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x * c).collect())?;
        Ok(self.derived(out, Op::MulScalarVar(a, s), &[a, s]))
    }

    /// `[n, k] × [k, m] → [n, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (n, k) = dims2(ta)?;
        let (k2, m) = dims2(tb)?;
        if k != k2 {
            return Err(mismatch(ta.shape(), tb.shape()));
        }
        let mut out = vec![0.0; n * m];
        matmul_into(ta.data(), tb.data(), &mut out, n, k, m);
        let out = Tensor::new(vec![n, m], out)?;
        Ok(self.derived(out, Op::MatMul(a, b), &[a, b]))
    }

    /// Same-padded 1-D convolution over time: `x` is `[T, C_in]`, `w` is
    /// `[K, C_in, C_out]` with odd `K`; the result is `[T, C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, dilation: usize) -> Result<Var> {
        let (tx, tw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (t_len, cin) = dims2(tx)?;
        let (k, cin2, cout) = dims3(tw)?;
        if cin != cin2 || k % 2 == 0 || dilation == 0 {
            return Err(mismatch(tx.shape(), tw.shape()));
        }
        let (xd, wd) = (tx.data(), tw.data());
        let mut out = vec![0.0; t_len * cout];
        for kk in 0..k {
            let Some((t0, t1, s0)) = tap_rows(t_len, k, kk, dilation) else {
                continue;
            };
            let rows = t1 - t0;
            gemm::mm(
                &xd[s0 * cin..(s0 + rows) * cin],
                &wd[kk * cin * cout..(kk + 1) * cin * cout],
                &mut out[t0 * cout..t1 * cout],
                rows,
                cin,
                cout,
            );
        }
        let out = Tensor::new(vec![t_len, cout], out)?;
        Ok(self.derived(out, Op::Conv1d { x, w, dilation }, &[x, w]))
    }

    /// 3×3 same-padded 2-D convolution with bias: `x` is `[C_in, H, W]`,
    /// `w` is `[C_out, C_in, 3, 3]`, `b` is `[C_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (&self.nodes[x.0].value, &self.nodes[w.0].value, &self.nodes[b.0].value);
        let (cin, h, wid) = dims3(tx)?;
        let (cout, cin2, kh, kw) = match *tw.shape() {
            [a, b, c, d] => (a, b, c, d),
            _ => return Err(mismatch(&[0, cin, 3, 3], tw.shape())),
        };
        if cin != cin2 || kh != 3 || kw != 3 || tb.shape() != [cout] {
            return Err(mismatch(&[cout, cin, 3, 3], tw.shape()));
        }
        let (xd, wd) = (tx.data(), tw.data());
        let mut out = vec![0.0; cout * h * wid];
        for o in 0..cout {
            let plane = &mut out[o * h * wid..(o + 1) * h * wid];
            plane.iter_mut().for_each(|v| *v = tb.data()[o]);
            for c in 0..cin {
                let xp = &xd[c * h * wid..(c + 1) * h * wid];
                for dy in 0..3 {
                    for dx in 0..3 {
                        let wv = wd[((o * cin + c) * 3 + dy) * 3 + dx];
                        conv2d_tap(xp, plane, h, wid, dy, dx, wv);
                    }
                }
            }
        }
        let out = Tensor::new(vec![cout, h, wid], out)?;
        Ok(self.derived(out, Op::Conv2d { x, w, b }, &[x, w, b]))
    }

    /// 2×2 average pooling of `[C, H, W]`, dropping an odd trailing row/column.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let (c, h, w) = dims3(tx)?;
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::invalid(format!("cannot pool shape {:?}", tx.shape())));
        }
        let xd = tx.data();
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let base = ch * h * w;
                    let s = xd[base + 2 * i * w + 2 * j]
                        + xd[base + 2 * i * w + 2 * j + 1]
                        + xd[base + (2 * i + 1) * w + 2 * j]
                        + xd[base + (2 * i + 1) * w + 2 * j + 1];
                    out[(ch * oh + i) * ow + j] = 0.25 * s;
                }
            }
        }
        let out = Tensor::new(vec![c, oh, ow], out)?;
        Ok(self.derived(out, Op::AvgPool2(x), &[x]))
    }

    /// Mean over the spatial axes of `[C, H, W]`, giving `[C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let (c, h, w) = dims3(tx)?;
        let out = tx
            .data()
            .chunks(h * w)
            .map(|p| p.iter().sum::<f64>() / (h * w) as f64)
            .collect();
        let out = Tensor::new(vec![c], out)?;
        Ok(self.derived(out, Op::GlobalAvgPool(x), &[x]))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let (_, d) = dims2(tx)?;
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.derived(out, Op::SoftmaxRows(x), &[x]))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let (n, d) = dims2(tx)?;
        if start >= end || end > d {
            return Err(Error::invalid(format!("column range {start}..{end} of {d}")));
        }
        let mut out = Vec::with_capacity(n * (end - start));
        for row in tx.data().chunks(d) {
            out.extend_from_slice(&row[start..end]);
        }
        let out = Tensor::new(vec![n, end - start], out)?;
        Ok(self.derived(out, Op::SliceCols(x, start), &[x]))
    }

    /// Row `idx[i]` of `x` becomes row `i` of the result.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let (n, d) = dims2(tx)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("row index {bad} out of {n}")));
        }
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            out.extend_from_slice(&tx.data()[i * d..(i + 1) * d]);
        }
        let out = Tensor::new(vec![idx.len(), d], out)?;
        Ok(self.derived(out, Op::GatherRows(x, idx.to_vec()), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.nodes[x.0].value.clone().reshaped(shape.to_vec())?;
        Ok(self.derived(out, Op::Reshape(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data().iter().sum();
        self.derived(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.derived(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Column means of a matrix, `[n, d] → [d]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let (n, d) = dims2(tx)?;
        let mut out = vec![0.0; d];
        for row in tx.data().chunks(d) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        Ok(self.derived(Tensor::vector(out), Op::MeanRows(x), &[x]))
    }

    /// Back-propagates from `out`, seeding its gradient with ones.
    pub fn backward(&self, out: Var) -> Gradients {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(vec![1.0; self.nodes[out.0].value.len()]);
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.backward_node(node, &g, &mut grads);
        }
        Gradients(grads)
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let y = node.value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if self.nodes[v.0].needs_grad {
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
                f(slot);
            }
        };
        let each = |slot: &mut [f64], f: &dyn Fn(usize) -> f64| {
            for (i, s) in slot.iter_mut().enumerate() {
                *s += f(i);
            }
        };
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(a, &mut |s| each(s, &|i| g[i]));
                acc(b, &mut |s| each(s, &|i| g[i]));
            }
            Op::Sub(a, b) => {
                acc(a, &mut |s| each(s, &|i| g[i]));
                acc(b, &mut |s| each(s, &|i| -g[i]));
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (val(a), val(b));
                acc(a, &mut |s| each(s, &|i| g[i] * xb[i]));
                acc(b, &mut |s| each(s, &|i| g[i] * xa[i]));
            }
            Op::Div(a, b) => {
                let (xa, xb) = (val(a), val(b));
                acc(a, &mut |s| each(s, &|i| g[i] / xb[i]));
                acc(b, &mut |s| each(s, &|i| -g[i] * xa[i] / (xb[i] * xb[i])));
            }
            Op::Scale(a, c) => acc(a, &mut |s| each(s, &|i| c * g[i])),
            Op::Shift(a) | Op::Reshape(a) => acc(a, &mut |s| each(s, &|i| g[i])),
            Op::Abs(a) => {
                let x = val(a);
                acc(a, &mut |s| each(s, &|i| g[i] * sign(x[i])));
            }
            Op::Square(a) => {
                let x = val(a);
                acc(a, &mut |s| each(s, &|i| 2.0 * x[i] * g[i]));
            }
            Op::Sqrt(a) => acc(a, &mut |s| each(s, &|i| g[i] / (2.0 * y[i]))),
            Op::Exp(a) => acc(a, &mut |s| each(s, &|i| g[i] * y[i])),
            Op::Tanh(a) => acc(a, &mut |s| each(s, &|i| g[i] * (1.0 - y[i] * y[i]))),
            Op::Sigmoid(a) => acc(a, &mut |s| each(s, &|i| g[i] * y[i] * (1.0 - y[i]))),
            Op::Silu(a) => {
                let x = val(a);
                acc(a, &mut |s| {
                    each(s, &|i| {
                        let sg = sigmoid(x[i]);
                        g[i] * (sg + x[i] * sg * (1.0 - sg))
                    })
                });
            }
            Op::MaxConst(a, c) => {
                let x = val(a);
                acc(a, &mut |s| each(s, &|i| if x[i] > c { g[i] } else { 0.0 }));
            }
            Op::AddRow(a, b) => {
                acc(a, &mut |s| each(s, &|i| g[i]));
                let d = self.nodes[b.0].value.len();
                acc(b, &mut |s| {
                    for row in g.chunks(d) {
                        for (x, gv) in s.iter_mut().zip(row) {
                            *x += gv;
                        }
                    }
                });
            }
            Op::AddScalarVar(a, sv) => {
                acc(a, &mut |s| each(s, &|i| g[i]));
                acc(sv, &mut |s| s[0] += g.iter().sum::<f64>());
            }
            Op::MulScalarVar(a, sv) => {
                let (xa, c) = (val(a), val(sv)[0]);
                acc(a, &mut |s| each(s, &|i| g[i] * c));
                acc(sv, &mut |s| s[0] += g.iter().zip(xa).map(|(g, x)| g * x).sum::<f64>());
            }
            Op::MatMul(a, b) => {
                let (n, k) = dims2(&self.nodes[a.0].value).expect("matrix");
                let m = self.nodes[b.0].value.shape()[1];
                let (xa, xb) = (val(a), val(b));
                acc(a, &mut |s| gemm::mm_nt(g, xb, s, n, m, k));
                acc(b, &mut |s| gemm::mm_tn(xa, g, s, n, k, m));
            }
            Op::Conv1d { x, w, dilation } => {
                let (t_len, cin) = dims2(&self.nodes[x.0].value).expect("matrix");
                let (k, _, cout) = dims3(&self.nodes[w.0].value).expect("rank 3");
                let (xd, wd) = (val(x), val(w));
                acc(x, &mut |s| {
                    for kk in 0..k {
                        let Some((t0, t1, s0)) = tap_rows(t_len, k, kk, dilation) else {
                            continue;
                        };
                        let rows = t1 - t0;
                        gemm::mm_nt(
                            &g[t0 * cout..t1 * cout],
                            &wd[kk * cin * cout..(kk + 1) * cin * cout],
                            &mut s[s0 * cin..(s0 + rows) * cin],
                            rows,
                            cout,
                            cin,
                        );
                    }
                });
                acc(w, &mut |s| {
                    for kk in 0..k {
                        let Some((t0, t1, s0)) = tap_rows(t_len, k, kk, dilation) else {
                            continue;
                        };
                        let rows = t1 - t0;
                        gemm::mm_tn(
                            &xd[s0 * cin..(s0 + rows) * cin],
                            &g[t0 * cout..t1 * cout],
                            &mut s[kk * cin * cout..(kk + 1) * cin * cout],
                            rows,
                            cin,
                            cout,
                        );
                    }
                });
            }
            Op::Conv2d { x, w, b } => {
                let (cin, h, wid) = dims3(&self.nodes[x.0].value).expect("rank 3");
                let cout = self.nodes[b.0].value.len();
                let (xd, wd) = (val(x), val(w));
                let hw = h * wid;
                acc(b, &mut |s| {
                    for o in 0..cout {
                        s[o] += g[o * hw..(o + 1) * hw].iter().sum::<f64>();
                    }
                });
                acc(x, &mut |s| {
                    for o in 0..cout {
                        let gp = &g[o * hw..(o + 1) * hw];
                        for c in 0..cin {
                            let sp = &mut s[c * hw..(c + 1) * hw];
                            for dy in 0..3 {
                                for dx in 0..3 {
                                    let wv = wd[((o * cin + c) * 3 + dy) * 3 + dx];
                                    conv2d_tap_transpose(gp, sp, h, wid, dy, dx, wv);
                                }
                            }
                        }
                    }
                });
                acc(w, &mut |s| {
                    for o in 0..cout {
                        let gp = &g[o * hw..(o + 1) * hw];
                        for c in 0..cin {
                            let xp = &xd[c * hw..(c + 1) * hw];
                            for dy in 0..3 {
                                for dx in 0..3 {
                                    s[((o * cin + c) * 3 + dy) * 3 + dx] += conv2d_tap_corr(xp, gp, h, wid, dy, dx);
                                }
                            }
                        }
                    }
                });
            }
            Op::AvgPool2(x) => {
                let (c, h, w) = dims3(&self.nodes[x.0].value).expect("rank 3");
                let (oh, ow) = (h / 2, w / 2);
                acc(x, &mut |s| {
                    for ch in 0..c {
                        for i in 0..oh {
                            for j in 0..ow {
                                let gv = 0.25 * g[(ch * oh + i) * ow + j];
                                let base = ch * h * w;
                                s[base + 2 * i * w + 2 * j] += gv;
                                s[base + 2 * i * w + 2 * j + 1] += gv;
                                s[base + (2 * i + 1) * w + 2 * j] += gv;
                                s[base + (2 * i + 1) * w + 2 * j + 1] += gv;
                            }
                        }
                    }
                });
            }
            Op::GlobalAvgPool(x) => {
                let (_, h, w) = dims3(&self.nodes[x.0].value).expect("rank 3");
                let hw = h * w;
                acc(x, &mut |s| each(s, &|i| g[i / hw] / hw as f64));
            }
            Op::SoftmaxRows(x) => {
                let d = node.value.shape()[1];
                acc(x, &mut |s| {
                    for ((srow, yrow), grow) in s.chunks_mut(d).zip(y.chunks(d)).zip(g.chunks(d)) {
                        let inner = dot(yrow, grow);
                        for ((sv, yv), gv) in srow.iter_mut().zip(yrow).zip(grow) {
                            *sv += yv * (gv - inner);
                        }
                    }
                });
            }
            Op::SliceCols(x, start) => {
                let d = self.nodes[x.0].value.shape()[1];
                let width = node.value.shape()[1];
                acc(x, &mut |s| {
                    for (srow, grow) in s.chunks_mut(d).zip(g.chunks(width)) {
                        for (sv, gv) in srow[start..start + width].iter_mut().zip(grow) {
                            *sv += gv;
                        }
                    }
                });
            }
            Op::GatherRows(x, ref idx) => {
                let d = self.nodes[x.0].value.shape()[1];
                acc(x, &mut |s| {
                    for (&r, grow) in idx.iter().zip(g.chunks(d)) {
                        for (sv, gv) in s[r * d..(r + 1) * d].iter_mut().zip(grow) {
                            *sv += gv;
                        }
                    }
                });
            }
            Op::Sum(x) => acc(x, &mut |s| each(s, &|_| g[0])),
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.len() as f64;
                acc(x, &mut |s| each(s, &|_| g[0] / n));
            }
            Op::MeanRows(x) => {
                let (n, d) = dims2(&self.nodes[x.0].value).expect("matrix");
                acc(x, &mut |s| each(s, &|i| g[i % d] / n as f64));
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let pairs = [
        lanes[0] + lanes[4],
        lanes[1] + lanes[5],
        lanes[2] + lanes[6],
        lanes[3] + lanes[7],
    ];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    gemm::mm(a, b, out, n, k, m);
}

/// Output rows `t0..t1` that tap `kk` of a same-padded dilated kernel
/// reads from input rows starting at `s0`, or `None` when the tap falls
/// entirely in the padding.
fn tap_rows(t_len: usize, k: usize, kk: usize, dilation: usize) -> Option<(usize, usize, usize)> {
    let off = (kk as isize - (k / 2) as isize) * dilation as isize;
    let t0 = (-off).max(0) as usize;
    let t1 = (t_len as isize - off).min(t_len as isize).max(0) as usize;
    (t0 < t1).then(|| (t0, t1, (t0 as isize + off) as usize))
}

/// Valid output rows/cols for kernel offset `d` (0..3) with padding 1.
fn tap_range(d: usize, n: usize) -> std::ops::Range<usize> {
    match d {
        0 => 1..n,
        1 => 0..n,
        _ => 0..n.saturating_sub(1),
    }
}

/// `out[i, j] += w · x[i + dy − 1, j + dx − 1]`.
fn conv2d_tap(x: &[f64], out: &mut [f64], h: usize, w: usize, dy: usize, dx: usize, wv: f64) {
    for i in tap_range(dy, h) {
        let si = i + dy - 1;
        let cols = tap_range(dx, w);
        let sj = cols.start + dx - 1;
        let len = cols.len();
        axpy(
            wv,
            &x[si * w + sj..si * w + sj + len],
            &mut out[i * w + cols.start..i * w + cols.start + len],
        );
    }
}

/// Adjoint of [`conv2d_tap`] with respect to `x`.
fn conv2d_tap_transpose(g: &[f64], sx: &mut [f64], h: usize, w: usize, dy: usize, dx: usize, wv: f64) {
    for i in tap_range(dy, h) {
        let si = i + dy - 1;
        let cols = tap_range(dx, w);
        let sj = cols.start + dx - 1;
        let len = cols.len();
        axpy(
            wv,
            &g[i * w + cols.start..i * w + cols.start + len],
            &mut sx[si * w + sj..si * w + sj + len],
        );
    }
}

/// `Σ_{i,j} g[i, j] · x[i + dy − 1, j + dx − 1]`.
fn conv2d_tap_corr(x: &[f64], g: &[f64], h: usize, w: usize, dy: usize, dx: usize) -> f64 {
    let mut total = 0.0;
    for i in tap_range(dy, h) {
        let si = i + dy - 1;
        let cols = tap_range(dx, w);
        let sj = cols.start + dx - 1;
        let len = cols.len();
        total += dot(
            &g[i * w + cols.start..i * w + cols.start + len],
            &x[si * w + sj..si * w + sj + len],
        );
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        let sq = g.square(x);
        let out = g.sum(sq);
        assert_eq!(g.value(out).item(), 5.0);
        let grads = g.backward(out);
        assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        let c = g.constant(Tensor::vector(vec![3.0, 4.0]));
        let p = g.mul(x, c).unwrap();
        let out = g.sum(p);
        let grads = g.backward(out);
        assert_eq!(grads.get(x).unwrap(), &[3.0, 4.0]);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn reused_var_accumulates() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let z = g.add(y, x).unwrap();
        let grads = g.backward(z);
        assert_eq!(grads.get(x).unwrap(), &[7.0]);
    }

    #[test]
    fn matmul_values() {
        let mut g = Graph::new();
        let a = g.input(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.input(Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[17.0, 39.0]);
    }

    #[test]
    fn conv1d_identity_kernel() {
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        // taps [1, 0, 0] pick the previous frame at dilation 1, two back at dilation 2
        let w = g.input(Tensor::new(vec![3, 1, 1], vec![1.0, 0.0, 0.0]).unwrap());
        let y = g.conv1d(x, w, 1).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 1.0, 2.0, 3.0]);
        let y2 = g.conv1d(x, w, 2).unwrap();
        assert_eq!(g.value(y2).data(), &[0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn conv2d_centre_tap_is_identity() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..12).map(f64::from).collect();
        let x = g.input(Tensor::new(vec![1, 3, 4], data.clone()).unwrap());
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = g.input(Tensor::new(vec![1, 1, 3, 3], k).unwrap());
        let b = g.input(Tensor::vector(vec![0.5]));
        let y = g.conv2d(x, w, b).unwrap();
        let expect: Vec<f64> = data.iter().map(|v| v + 0.5).collect();
        assert_eq!(g.value(y).data(), expect.as_slice());
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[2, 2]));
        assert!(g.add(a, b).is_err());
        assert!(g.matmul(a, b).is_err());
        assert!(g.gather_rows(a, &[2]).is_err());
        assert!(g.slice_cols(a, 2, 4).is_err());
    }
}
