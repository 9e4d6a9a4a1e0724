//! Reverse-mode differentiation tape.
//!
//! Every primitive evaluates eagerly, stores its result on the tape and
//! records enough information to propagate gradients back to its inputs.
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction and [`Tape::backward`] is a single reverse sweep.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Div(usize, usize),
    Pow(usize, f64),
    Exp(usize),
    Tanh(usize),
    Square(usize),
    Relu(usize),
    Swish(usize),
    Sum {
        input: usize,
        outer: usize,
        len: usize,
        inner: usize,
    },
    SumAll(usize),
    Concat {
        parts: Vec<usize>,
        outer: usize,
        inners: Vec<usize>,
    },
    GatherRows {
        input: usize,
        index: Vec<usize>,
    },
    ScatterAddRows {
        input: usize,
        index: Vec<usize>,
    },
    SegmentSoftmax {
        input: usize,
        segments: Vec<usize>,
        n_segments: usize,
    },
    LayerNorm {
        input: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        floored: Vec<bool>,
    },
    Reshape(usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Lower bound applied to the per-row variance in [`Tape::layer_norm`].
pub const LAYER_NORM_VARIANCE_FLOOR: f64 = 1e-5;

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    kink_hash: u64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn fnv(hash: u64, byte: u8) -> u64 {
    (hash ^ byte as u64).wrapping_mul(0x100_0000_01b3)
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            kink_hash: 0xcbf2_9ce4_8422_2325,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hash of every piecewise branch taken so far (ReLU signs, variance
    /// floor hits). Two evaluations with different signatures straddle a
    /// point where the recorded function is not differentiable.
    pub fn kink_signature(&self) -> u64 {
        self.kink_hash
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return Err(TensorError::ForeignVar);
        }
        Ok(v.idx)
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        })
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        &self.nodes[v.idx].value
    }

    /// Records a value that is not differentiated.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push("constant", t, Op::Leaf, false)
            .expect("constant must be finite")
    }

    /// Records a differentiable input that is not a stored parameter.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        self.push("leaf", t, Op::Leaf, true)
    }

    /// Records the current value of a stored parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push("param", p.tensor.clone(), Op::Param(id), p.requires_grad)
            .expect("parameters must be finite")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let ((m, k), (k2, n)) = match (va.dims2(), vb.dims2()) {
            (Some(x), Some(y)) if x.1 == y.0 => (x, y),
            _ => return Err(mismatch("matmul", va, vb)),
        };
        debug_assert_eq!(k, k2);
        let out = Tensor::new(vec![m, n], Tensor::matmul_raw(va.data(), vb.data(), m, k, n))?;
        let rg = self.rg(ia) || self.rg(ib);
        self.push("matmul", out, Op::MatMul(ia, ib), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let va = &self.nodes[ia].value;
        if va.rank() != 2 {
            return Err(TensorError::InvalidShape {
                op: "transpose",
                shape: va.shape().to_vec(),
            });
        }
        let out = va.transpose2();
        let rg = self.rg(ia);
        self.push("transpose", out, Op::Transpose(ia), rg)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.shape() != vb.shape() {
            return Err(mismatch(name, va, vb));
        }
        let out = va.zip_map(vb, f);
        let rg = self.rg(ia) || self.rg(ib);
        self.push(name, out, op(ia, ib), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let ib = self.idx(b)?;
        if self.nodes[ib].value.data().contains(&0.0) {
            return Err(TensorError::DivideByZero);
        }
        self.binary("divide", a, b, |x, y| x / y, Op::Div)
    }

    /// Adds a row vector of length `cols` to every row of a matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(row)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let cols = match va.dims2() {
            Some((_, c)) if vb.len() == c && vb.rank() == 1 => c,
            _ => return Err(mismatch("add_row", va, vb)),
        };
        let mut out = va.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += vb.data()[i % cols];
        }
        let rg = self.rg(ia) || self.rg(ib);
        self.push("add_row", out, Op::AddRow(ia, ib), rg)
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: impl Fn(usize) -> Op) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(f);
        let rg = self.rg(ia);
        self.push(name, out, op(ia), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.unary("scale", a, |x| x * factor, |i| Op::Scale(i, factor))
    }

    /// Elementwise power with a constant exponent. Integral exponents are
    /// evaluated by repeated multiplication.
    pub fn pow(&mut self, a: Var, exponent: f64) -> Result<Var> {
        self.unary("power", a, |x| powc(x, exponent), |i| Op::Pow(i, exponent))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, Op::Square)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let mut h = self.kink_hash;
        for &x in self.nodes[ia].value.data() {
            h = fnv(h, (x > 0.0) as u8);
        }
        self.kink_hash = h;
        self.unary("relu", a, |x| x.max(0.0), Op::Relu)
    }

    /// `x * sigmoid(x)`.
    pub fn swish(&mut self, a: Var) -> Result<Var> {
        self.unary("swish", a, |x| x * sigmoid(x), Op::Swish)
    }

    /// Sums over one axis, removing it. A rank-1 input reduces to shape `[1]`.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let va = &self.nodes[ia].value;
        if axis >= va.rank() {
            return Err(TensorError::InvalidShape {
                op: "sum",
                shape: va.shape().to_vec(),
            });
        }
        let (outer, len, inner) = split_axis(va.shape(), axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &va.data()[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape: Vec<usize> = va.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let out = Tensor::new(shape, data)?;
        let rg = self.rg(ia);
        self.push(
            "sum",
            out,
            Op::Sum {
                input: ia,
                outer,
                len,
                inner,
            },
            rg,
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = Tensor::scalar(self.nodes[ia].value.sum());
        let rg = self.rg(ia);
        self.push("sum", out, Op::SumAll(ia), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.reshape(shape)?;
        let rg = self.rg(ia);
        self.push("reshape", out, Op::Reshape(ia), rg)
    }

    /// Concatenates tensors that agree on every dimension except `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::InvalidShape {
                op: "concat",
                shape: vec![],
            });
        }
        let idxs = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>>>()?;
        let first = &self.nodes[idxs[0]].value;
        if axis >= first.rank() {
            return Err(TensorError::InvalidShape {
                op: "concat",
                shape: first.shape().to_vec(),
            });
        }
        let mut shape = first.shape().to_vec();
        let mut total = 0;
        for &i in &idxs {
            let v = &self.nodes[i].value;
            let ok = v.rank() == first.rank()
                && v.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !ok {
                return Err(mismatch("concat", first, v));
            }
            total += v.shape()[axis];
        }
        shape[axis] = total;
        let outer: usize = first.shape()[..axis].iter().product();
        let inners: Vec<usize> = idxs
            .iter()
            .map(|&i| {
                let s = self.nodes[i].value.shape();
                s[axis..].iter().product()
            })
            .collect();
        let row: usize = inners.iter().sum();
        let mut data = Vec::with_capacity(outer * row);
        for o in 0..outer {
            for (&i, &inner) in idxs.iter().zip(&inners) {
                data.extend_from_slice(&self.nodes[i].value.data()[o * inner..(o + 1) * inner]);
            }
        }
        let out = Tensor::new(shape, data)?;
        let rg = idxs.iter().any(|&i| self.rg(i));
        self.push(
            "concat",
            out,
            Op::Concat {
                parts: idxs,
                outer,
                inners,
            },
            rg,
        )
    }

    /// Selects rows of a matrix; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let ia = self.idx(a)?;
        let va = &self.nodes[ia].value;
        let (rows, cols) = va.dims2().ok_or_else(|| TensorError::InvalidShape {
            op: "gather_rows",
            shape: va.shape().to_vec(),
        })?;
        if index.is_empty() {
            return Err(TensorError::InvalidShape {
                op: "gather_rows",
                shape: vec![0, cols],
            });
        }
        let mut data = Vec::with_capacity(index.len() * cols);
        for &r in index {
            if r >= rows {
                return Err(TensorError::IndexOutOfBounds {
                    op: "gather_rows",
                    index: r,
                    len: rows,
                });
            }
            data.extend_from_slice(va.row(r));
        }
        let out = Tensor::new(vec![index.len(), cols], data)?;
        let rg = self.rg(ia);
        self.push(
            "gather_rows",
            out,
            Op::GatherRows {
                input: ia,
                index: index.to_vec(),
            },
            rg,
        )
    }

    /// Sums row `e` of the input into output row `index[e]`; the output has
    /// `n_rows` rows and rows that receive nothing are zero.
    pub fn scatter_add_rows(&mut self, a: Var, index: &[usize], n_rows: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let va = &self.nodes[ia].value;
        let (rows, cols) = match va.dims2() {
            Some((r, c)) if r == index.len() => (r, c),
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op: "scatter_add_rows",
                    lhs: va.shape().to_vec(),
                    rhs: vec![index.len()],
                })
            }
        };
        let mut data = vec![0.0; n_rows * cols];
        for (e, &dst) in index.iter().enumerate().take(rows) {
            if dst >= n_rows {
                return Err(TensorError::IndexOutOfBounds {
                    op: "scatter_add_rows",
                    index: dst,
                    len: n_rows,
                });
            }
            for (d, s) in data[dst * cols..(dst + 1) * cols].iter_mut().zip(va.row(e)) {
                *d += s;
            }
        }
        let out = Tensor::new(vec![n_rows, cols], data)?;
        let rg = self.rg(ia);
        self.push(
            "scatter_add_rows",
            out,
            Op::ScatterAddRows {
                input: ia,
                index: index.to_vec(),
            },
            rg,
        )
    }

    /// Column-wise softmax over groups of rows: for every column, rows that
    /// share a segment id are normalized together. Uses max subtraction.
    pub fn segment_softmax(&mut self, a: Var, segments: &[usize], n_segments: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let va = &self.nodes[ia].value;
        let (rows, cols) = match va.dims2() {
            Some((r, c)) if r == segments.len() => (r, c),
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op: "softmax",
                    lhs: va.shape().to_vec(),
                    rhs: vec![segments.len()],
                })
            }
        };
        if let Some(&bad) = segments.iter().find(|&&s| s >= n_segments) {
            return Err(TensorError::IndexOutOfBounds {
                op: "softmax",
                index: bad,
                len: n_segments,
            });
        }
        let x = va.data();
        let mut maxes = vec![f64::NEG_INFINITY; n_segments * cols];
        for r in 0..rows {
            let s = segments[r];
            for c in 0..cols {
                let m = &mut maxes[s * cols + c];
                *m = m.max(x[r * cols + c]);
            }
        }
        let mut out = vec![0.0; rows * cols];
        let mut sums = vec![0.0; n_segments * cols];
        for r in 0..rows {
            let s = segments[r];
            for c in 0..cols {
                let e = (x[r * cols + c] - maxes[s * cols + c]).exp();
                out[r * cols + c] = e;
                sums[s * cols + c] += e;
            }
        }
        for r in 0..rows {
            let s = segments[r];
            for c in 0..cols {
                out[r * cols + c] /= sums[s * cols + c];
            }
        }
        let out = Tensor::new(vec![rows, cols], out)?;
        let rg = self.rg(ia);
        self.push(
            "softmax",
            out,
            Op::SegmentSoftmax {
                input: ia,
                segments: segments.to_vec(),
                n_segments,
            },
            rg,
        )
    }

    /// Softmax of a rank-1 tensor.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        let shape = self.value(a).shape().to_vec();
        let col = self.reshape(a, &[n, 1])?;
        let s = self.segment_softmax(col, &vec![0; n], 1)?;
        self.reshape(s, &shape)
    }

    /// Normalizes each row of a matrix to zero mean and unit variance, then
    /// applies per-column `gain` and `bias`. The variance is floored at
    /// [`LAYER_NORM_VARIANCE_FLOOR`].
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var) -> Result<Var> {
        let (ia, ig, ib) = (self.idx(a)?, self.idx(gain)?, self.idx(bias)?);
        let va = &self.nodes[ia].value;
        let (rows, cols) = va.dims2().ok_or_else(|| TensorError::InvalidShape {
            op: "layer_norm",
            shape: va.shape().to_vec(),
        })?;
        let (vg, vb) = (&self.nodes[ig].value, &self.nodes[ib].value);
        if vg.shape() != [cols] || vb.shape() != [cols] {
            return Err(mismatch("layer_norm", va, vg));
        }
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut floored = vec![false; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let x = va.row(r);
            let mean = x.iter().sum::<f64>() / cols as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            floored[r] = var < LAYER_NORM_VARIANCE_FLOOR;
            let is = 1.0 / var.max(LAYER_NORM_VARIANCE_FLOOR).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let xh = (x[c] - mean) * is;
                xhat[r * cols + c] = xh;
                out[r * cols + c] = xh * vg.data()[c] + vb.data()[c];
            }
        }
        let mut h = self.kink_hash;
        for &f in &floored {
            h = fnv(h, f as u8 | 2);
        }
        self.kink_hash = h;
        let out = Tensor::new(vec![rows, cols], out)?;
        let rg = self.rg(ia) || self.rg(ig) || self.rg(ib);
        self.push(
            "layer_norm",
            out,
            Op::LayerNorm {
                input: ia,
                gain: ig,
                bias: ib,
                xhat,
                inv_std,
                floored,
            },
            rg,
        )
    }

    /// Propagates gradients from a scalar loss back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let il = self.idx(loss)?;
        let lv = &self.nodes[il].value;
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        if !self.nodes[il].requires_grad {
            return Err(TensorError::Detached);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; il + 1];
        grads[il] = Some(Tensor::ones(lv.shape()));
        for i in (0..=il).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            params: self
                .nodes
                .iter()
                .enumerate()
                .take(il + 1)
                .filter_map(|(i, n)| match n.op {
                    Op::Param(p) => Some((p, i)),
                    _ => None,
                })
                .collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let mut acc = |j: usize, t: Tensor| {
            if !self.nodes[j].requires_grad {
                return;
            }
            match &mut grads[j] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let val = |j: usize| &self.nodes[j].value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (m, k) = va.dims2().unwrap();
                let n = vb.dims2().unwrap().1;
                if self.rg(*a) {
                    let bt = vb.transpose2();
                    let d = Tensor::matmul_raw(g.data(), bt.data(), m, n, k);
                    acc(*a, Tensor::new(vec![m, k], d).unwrap());
                }
                if self.rg(*b) {
                    let at = va.transpose2();
                    let d = Tensor::matmul_raw(at.data(), g.data(), k, m, n);
                    acc(*b, Tensor::new(vec![k, n], d).unwrap());
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose2()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, b) => {
                acc(*a, g.clone());
                if self.rg(*b) {
                    let cols = val(*b).len();
                    let mut d = vec![0.0; cols];
                    for (k, v) in g.data().iter().enumerate() {
                        d[k % cols] += v;
                    }
                    acc(*b, Tensor::vector(d));
                }
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.zip_map(val(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    acc(*b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, f) => acc(*a, g.map(|x| x * f)),
            Op::Div(a, b) => {
                let vb = val(*b);
                if self.rg(*a) {
                    acc(*a, g.zip_map(vb, |x, y| x / y));
                }
                if self.rg(*b) {
                    // d(a/b)/db = -(a/b)/b
                    let q = node.value.zip_map(vb, |o, y| -o / y);
                    acc(*b, g.zip_map(&q, |x, y| x * y));
                }
            }
            Op::Pow(a, p) => {
                let d = val(*a).map(|x| p * powc(x, p - 1.0));
                acc(*a, g.zip_map(&d, |x, y| x * y));
            }
            Op::Exp(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y)),
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y))),
            Op::Square(a) => acc(*a, g.zip_map(val(*a), |x, y| 2.0 * x * y)),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |x, y| if y > 0.0 { x } else { 0.0 })),
            Op::Swish(a) => acc(
                *a,
                g.zip_map(val(*a), |x, y| {
                    let s = sigmoid(y);
                    x * (s + y * s * (1.0 - s))
                }),
            ),
            Op::Sum {
                input,
                outer,
                len,
                inner,
            } => {
                let mut d = Vec::with_capacity(outer * len * inner);
                for o in 0..*outer {
                    let src = &g.data()[o * inner..(o + 1) * inner];
                    for _ in 0..*len {
                        d.extend_from_slice(src);
                    }
                }
                acc(*input, Tensor::new(val(*input).shape().to_vec(), d).unwrap());
            }
            Op::SumAll(a) => acc(*a, Tensor::full(val(*a).shape(), g.item())),
            Op::Reshape(a) => acc(*a, g.reshape(val(*a).shape()).unwrap()),
            Op::Concat {
                parts,
                outer,
                inners,
            } => {
                let row: usize = inners.iter().sum();
                let mut offset = 0;
                for (&p, &inner) in parts.iter().zip(inners) {
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(outer * inner);
                        for o in 0..*outer {
                            let start = o * row + offset;
                            d.extend_from_slice(&g.data()[start..start + inner]);
                        }
                        acc(p, Tensor::new(val(p).shape().to_vec(), d).unwrap());
                    }
                    offset += inner;
                }
            }
            Op::GatherRows { input, index } => {
                let (rows, cols) = val(*input).dims2().unwrap();
                let mut d = vec![0.0; rows * cols];
                for (e, &r) in index.iter().enumerate() {
                    for (x, y) in d[r * cols..(r + 1) * cols].iter_mut().zip(g.row(e)) {
                        *x += y;
                    }
                }
                acc(*input, Tensor::new(vec![rows, cols], d).unwrap());
            }
            Op::ScatterAddRows { input, index } => {
                let cols = g.dims2().unwrap().1;
                let mut d = Vec::with_capacity(index.len() * cols);
                for &r in index {
                    d.extend_from_slice(g.row(r));
                }
                acc(*input, Tensor::new(vec![index.len(), cols], d).unwrap());
            }
            Op::SegmentSoftmax {
                input,
                segments,
                n_segments,
            } => {
                let y = &node.value;
                let (rows, cols) = y.dims2().unwrap();
                let mut dots = vec![0.0; n_segments * cols];
                for r in 0..rows {
                    for c in 0..cols {
                        dots[segments[r] * cols + c] += y.get2(r, c) * g.get2(r, c);
                    }
                }
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    for c in 0..cols {
                        d[r * cols + c] = y.get2(r, c) * (g.get2(r, c) - dots[segments[r] * cols + c]);
                    }
                }
                acc(*input, Tensor::new(vec![rows, cols], d).unwrap());
            }
            Op::LayerNorm {
                input,
                gain,
                bias,
                xhat,
                inv_std,
                floored,
            } => {
                let (rows, cols) = g.dims2().unwrap();
                let gv = val(*gain).data();
                if self.rg(*input) {
                    let mut d = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let gh: Vec<f64> = (0..cols).map(|c| g.get2(r, c) * gv[c]).collect();
                        let mean_g = gh.iter().sum::<f64>() / cols as f64;
                        let mean_gx = if floored[r] {
                            0.0
                        } else {
                            gh.iter()
                                .zip(&xhat[r * cols..(r + 1) * cols])
                                .map(|(a, b)| a * b)
                                .sum::<f64>()
                                / cols as f64
                        };
                        for c in 0..cols {
                            d[r * cols + c] =
                                inv_std[r] * (gh[c] - mean_g - xhat[r * cols + c] * mean_gx);
                        }
                    }
                    acc(*input, Tensor::new(vec![rows, cols], d).unwrap());
                }
                if self.rg(*gain) {
                    let mut d = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            d[c] += g.get2(r, c) * xhat[r * cols + c];
                        }
                    }
                    acc(*gain, Tensor::vector(d));
                }
                if self.rg(*bias) {
                    let mut d = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            d[c] += g.get2(r, c);
                        }
                    }
                    acc(*bias, Tensor::vector(d));
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn powc(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient with respect to a recorded value; zero if it was not reached.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Result<Tensor> {
        if v.tape != self.tape {
            return Err(TensorError::ForeignVar);
        }
        Ok(self
            .grads
            .get(v.idx)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())))
    }

    /// One gradient per parameter in store order. Parameters recorded more
    /// than once have their contributions summed; unreached ones are zero.
    pub fn for_params(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out = store.zeros_like();
        for &(pid, node) in &self.params {
            if let Some(Some(g)) = self.grads.get(node) {
                out[pid.0].add_assign(g);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = t(&[3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let i = tape.constant(Tensor::identity(3));
        let av = tape.constant(a.clone());
        let p = tape.matmul(i, av).unwrap();
        assert_eq!(tape.value(p), &a);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn sum_axis_of_ones() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::ones(&[2, 2]));
        let s = tape.sum_axis(a, 0).unwrap();
        assert_eq!(tape.value(s).data(), &[2.0, 2.0]);
        let s1 = tape.sum_axis(a, 1).unwrap();
        assert_eq!(tape.value(s1).data(), &[2.0, 2.0]);
    }

    #[test]
    fn divide_by_zero_is_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.constant(Tensor::vector(vec![1.0, 0.0]));
        assert_eq!(tape.div(a, b), Err(TensorError::DivideByZero));
    }

    #[test]
    fn nonfinite_result_is_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1000.0]));
        assert_eq!(tape.exp(a), Err(TensorError::NonFinite { op: "exp" }));
    }

    #[test]
    fn softmax_cases() {
        let mut tape = Tape::new();
        for (input, expected) in [
            (vec![0.0, 0.0], vec![0.5, 0.5]),
            (vec![1000.0, 1000.0], vec![0.5, 0.5]),
            (vec![0.0, 3f64.ln()], vec![0.25, 0.75]),
        ] {
            let x = tape.constant(Tensor::vector(input));
            let s = tape.softmax(x).unwrap();
            let v = tape.value(s).data();
            for (a, b) in v.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12, "{v:?}");
            }
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn activations() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![-2.0, 0.0, 2.0]));
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let s = tape.swish(x).unwrap();
        assert_eq!(tape.value(s).data()[1], 0.0);
    }

    #[test]
    fn layer_norm_row_mean_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let g = tape.constant(Tensor::ones(&[3]));
        let b = tape.constant(Tensor::zeros(&[3]));
        let y = tape.layer_norm(x, g, b).unwrap();
        let v = tape.value(y).data();
        assert!(v.iter().sum::<f64>().abs() / 3.0 < 1e-12);
        let var = v.iter().map(|x| x * x).sum::<f64>() / 3.0;
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut store = ParamStore::new();
        let id = store.insert("p", Tensor::vector(vec![1.0, -2.0, 4.0])).unwrap();
        let mut tape = Tape::new();
        let p = tape.param(&store, id);
        let loss = tape.sum_all(p).unwrap();
        let g = tape.backward(loss).unwrap().for_params(&store);
        assert_eq!(g[0].data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_sum_of_squares() {
        let mut store = ParamStore::new();
        let id = store.insert("p", Tensor::vector(vec![1.0, -2.0])).unwrap();
        let mut tape = Tape::new();
        let p = tape.param(&store, id);
        let sq = tape.square(p).unwrap();
        let loss = tape.sum_all(sq).unwrap();
        let g = tape.backward(loss).unwrap().for_params(&store);
        assert_eq!(g[0].data(), &[2.0, -4.0]);
    }

    #[test]
    fn unreached_params_get_zero() {
        let mut store = ParamStore::new();
        let a = store.insert("a", Tensor::vector(vec![1.0])).unwrap();
        store.insert("b", Tensor::zeros(&[2, 2])).unwrap();
        let mut tape = Tape::new();
        let pa = tape.param(&store, a);
        let loss = tape.sum_all(pa).unwrap();
        let g = tape.backward(loss).unwrap().for_params(&store);
        assert_eq!(g[1], Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(matches!(tape.backward(x), Err(TensorError::NonScalarLoss(_))));
        let c = tape.constant(Tensor::scalar(1.0));
        assert_eq!(tape.backward(c).unwrap_err(), TensorError::Detached);
        let other = Tape::new();
        assert_eq!(other.backward(c).unwrap_err(), TensorError::ForeignVar);
    }

    #[test]
    fn repeated_param_accumulates() {
        let mut store = ParamStore::new();
        let id = store.insert("p", Tensor::scalar(3.0)).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, id);
        let b = tape.param(&store, id);
        let m = tape.mul(a, b).unwrap();
        let g = tape.backward(m).unwrap().for_params(&store);
        assert_eq!(g[0].item(), 6.0);
    }
}
