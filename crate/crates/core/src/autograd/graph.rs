use std::collections::BTreeMap;

use super::tensor::matmul_into;
use super::{AutogradError, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reductions supported by [`Graph::reduce`].
#[derive(Clone, Copy, Debug)]
pub enum Reduce {
    /// Sum of every entry, producing 1×1.
    Sum,
    /// Column-wise mean over rows, producing 1×cols.
    MeanRows,
    /// `w · a` for a 1×rows weight row `w` that sums to one, producing 1×cols.
    WeightedRowSum(Var),
}

/// Accumulated gradient of a leaf.
///
/// Leaves that are only touched through [`Graph::lookup`] keep a sparse row
/// map so that large embedding tables are never densified per sample.
#[derive(Clone, Debug, PartialEq)]
pub enum GradBuf {
    Dense(Vec<f64>),
    Rows {
        cols: usize,
        rows: BTreeMap<usize, Vec<f64>>,
    },
}

impl GradBuf {
    fn add_dense(&mut self, delta: &[f64]) {
        match self {
            GradBuf::Dense(g) => {
                for (a, d) in g.iter_mut().zip(delta) {
                    *a += d;
                }
            }
            GradBuf::Rows { cols, rows } => {
                let mut dense = delta.to_vec();
                for (r, vals) in rows.iter() {
                    for (a, v) in dense[r * *cols..(r + 1) * *cols].iter_mut().zip(vals) {
                        *a += v;
                    }
                }
                *self = GradBuf::Dense(dense);
            }
        }
    }

    fn add_row(&mut self, row: usize, delta: &[f64]) {
        match self {
            GradBuf::Dense(g) => {
                let cols = delta.len();
                for (a, d) in g[row * cols..(row + 1) * cols].iter_mut().zip(delta) {
                    *a += d;
                }
            }
            GradBuf::Rows { rows, .. } => {
                let entry = rows.entry(row).or_insert_with(|| vec![0.0; delta.len()]);
                for (a, d) in entry.iter_mut().zip(delta) {
                    *a += d;
                }
            }
        }
    }

    /// Adds this gradient into a dense buffer of the owning tensor's shape.
    pub fn add_into(&self, target: &mut [f64]) {
        match self {
            GradBuf::Dense(g) => {
                for (a, d) in target.iter_mut().zip(g) {
                    *a += d;
                }
            }
            GradBuf::Rows { cols, rows } => {
                for (r, vals) in rows {
                    for (a, v) in target[r * cols..(r + 1) * cols].iter_mut().zip(vals) {
                        *a += v;
                    }
                }
            }
        }
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        self.add_into(&mut out);
        out
    }

    pub fn has_non_finite(&self) -> bool {
        match self {
            GradBuf::Dense(g) => g.iter().any(|v| !v.is_finite()),
            GradBuf::Rows { rows, .. } => rows.values().flatten().any(|v| !v.is_finite()),
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    Lookup(Var, Vec<usize>),
    Sum(Var),
    MeanRows(Var),
    WeightedRowSum(Var, Var),
    RowScale(Var, Var),
    Reshape(Var),
    BceWithLogits(Var, f64),
}

enum Value<'a> {
    Borrowed(&'a Tensor),
    Owned(Tensor),
}

impl Value<'_> {
    fn get(&self) -> &Tensor {
        match self {
            Value::Borrowed(t) => t,
            Value::Owned(t) => t,
        }
    }
}

struct Node<'a> {
    value: Value<'a>,
    op: Op,
    needs_grad: bool,
}

/// Append-only tape of tensor operations.
///
/// Nodes are stored in creation order, so operands always precede their
/// consumers and [`Graph::backward`] walks the tape in exact reverse order.
/// Leaves may borrow their value (model parameters) or own it.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    leaf_grads: Vec<Option<GradBuf>>,
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
            adjoints: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.leaf_grads.clear();
        self.adjoints.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0].value.get()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Value<'a>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push_result(
        &mut self,
        name: &'static str,
        out: Tensor,
        op: Op,
        operands: &[Var],
    ) -> Result<Var, AutogradError> {
        if !out.is_finite() {
            return Err(AutogradError::NonFinite { op: name });
        }
        let needs_grad = operands.iter().any(|o| self.nodes[o.0].needs_grad);
        Ok(self.push(Value::Owned(out), op, needs_grad))
    }

    /// Trainable leaf borrowing its value.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.push(Value::Borrowed(t), Op::Leaf, true)
    }

    /// Trainable leaf owning its value.
    pub fn param_owned(&mut self, t: Tensor) -> Var {
        self.push(Value::Owned(t), Op::Leaf, true)
    }

    /// Non-trainable leaf borrowing its value.
    pub fn constant(&mut self, t: &'a Tensor) -> Var {
        self.push(Value::Borrowed(t), Op::Leaf, false)
    }

    pub fn constant_owned(&mut self, t: Tensor) -> Var {
        self.push(Value::Owned(t), Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out = ta.matmul(tb)?;
        self.push_result("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutogradError> {
        let out = self.value(a).transpose();
        self.push_result("transpose", out, Op::Transpose(a), &[a])
    }

    fn binary_shapes(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutogradError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutogradError::Shape {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data).expect("shape checked")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| f(*x)).collect();
        Tensor::new(ta.rows(), ta.cols(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.binary_shapes("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        self.push_result("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.binary_shapes("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        self.push_result("sub", out, Op::Sub(a, b), &[a, b])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.binary_shapes("hadamard", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        self.push_result("hadamard", out, Op::Hadamard(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AutogradError> {
        let out = self.map(a, |x| c * x);
        self.push_result("scale", out, Op::Scale(a, c), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutogradError> {
        let out = self.map(a, |x| x.max(0.0));
        self.push_result("relu", out, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutogradError> {
        let out = self.map(a, sigmoid);
        self.push_result("sigmoid", out, Op::Sigmoid(a), &[a])
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, AutogradError> {
        let ta = self.value(a);
        let mut out = ta.clone();
        out.clear_grad();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push_result("softmax_rows", out, Op::SoftmaxRows(a), &[a])
    }

    /// Horizontal concatenation of single-row tensors.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutogradError> {
        if parts.is_empty() {
            return Err(AutogradError::Argument("concat_cols of an empty list".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rows() != 1 {
                return Err(AutogradError::Shape {
                    op: "concat_cols",
                    left: (1, t.cols()),
                    right: t.shape(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::row_vector(&data);
        self.push_result("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Gathers rows of `table`.
    pub fn lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutogradError> {
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * t.cols());
        for &id in ids {
            if id >= t.rows() {
                return Err(AutogradError::Index {
                    id,
                    len: t.rows(),
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::new(ids.len(), t.cols(), data)?;
        self.push_result("lookup", out, Op::Lookup(table, ids.to_vec()), &[table])
    }

    pub fn reduce(&mut self, a: Var, kind: Reduce) -> Result<Var, AutogradError> {
        match kind {
            Reduce::Sum => {
                let s = self.value(a).sum();
                self.push_result("sum", Tensor::row_vector(&[s]), Op::Sum(a), &[a])
            }
            Reduce::MeanRows => {
                let t = self.value(a);
                if t.rows() == 0 {
                    return Err(AutogradError::Argument("mean over zero rows".into()));
                }
                let mut acc = vec![0.0; t.cols()];
                for r in 0..t.rows() {
                    for (o, v) in acc.iter_mut().zip(t.row(r)) {
                        *o += v;
                    }
                }
                let n = t.rows() as f64;
                acc.iter_mut().for_each(|v| *v /= n);
                self.push_result("mean_rows", Tensor::row_vector(&acc), Op::MeanRows(a), &[a])
            }
            Reduce::WeightedRowSum(w) => self.weighted_rowsum(a, w),
        }
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutogradError> {
        self.reduce(a, Reduce::Sum)
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var, AutogradError> {
        self.reduce(a, Reduce::MeanRows)
    }

    fn weighted_rowsum(&mut self, a: Var, w: Var) -> Result<Var, AutogradError> {
        let (ta, tw) = (self.value(a), self.value(w));
        if tw.rows() != 1 || tw.cols() != ta.rows() {
            return Err(AutogradError::Shape {
                op: "weighted_rowsum",
                left: ta.shape(),
                right: tw.shape(),
            });
        }
        let total: f64 = tw.data().iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AutogradError::Argument(format!(
                "weighted_rowsum weights sum to {total}, expected 1"
            )));
        }
        let out = tw.matmul(ta)?;
        self.push_result("weighted_rowsum", out, Op::WeightedRowSum(a, w), &[a, w])
    }

    /// Scales row `i` of `a` by `w[i]`; `w` is 1×rows.
    pub fn row_scale(&mut self, a: Var, w: Var) -> Result<Var, AutogradError> {
        let (ta, tw) = (self.value(a), self.value(w));
        if tw.rows() != 1 || tw.cols() != ta.rows() {
            return Err(AutogradError::Shape {
                op: "row_scale",
                left: ta.shape(),
                right: tw.shape(),
            });
        }
        let mut out = Tensor::zeros(ta.rows(), ta.cols());
        for r in 0..ta.rows() {
            let s = tw.data()[r];
            for (o, v) in out.row_mut(r).iter_mut().zip(ta.row(r)) {
                *o = s * v;
            }
        }
        self.push_result("row_scale", out, Op::RowScale(a, w), &[a, w])
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, AutogradError> {
        let ta = self.value(a);
        if ta.len() != rows * cols {
            return Err(AutogradError::Shape {
                op: "reshape",
                left: ta.shape(),
                right: (rows, cols),
            });
        }
        let out = Tensor::new(rows, cols, ta.data().to_vec())?;
        self.push_result("reshape", out, Op::Reshape(a), &[a])
    }

    /// Binary cross-entropy on a 1×1 logit, in the overflow-free form
    /// `max(z, 0) - z·y + ln(1 + e^{-|z|})`.
    pub fn bce_with_logits(&mut self, logit: Var, label: f64) -> Result<Var, AutogradError> {
        let t = self.value(logit);
        if t.shape() != (1, 1) {
            return Err(AutogradError::Shape {
                op: "bce_with_logits",
                left: t.shape(),
                right: (1, 1),
            });
        }
        let z = t.scalar();
        let loss = z.max(0.0) - z * label + (-z.abs()).exp().ln_1p();
        self.push_result(
            "bce_with_logits",
            Tensor::row_vector(&[loss]),
            Op::BceWithLogits(logit, label),
            &[logit],
        )
    }

    /// Reverse pass from a 1×1 loss.
    ///
    /// Leaf gradients are added to whatever earlier calls accumulated;
    /// intermediate adjoints are recomputed from scratch and kept until the
    /// next call so callers can inspect them with [`Graph::adjoint`].
    pub fn backward(&mut self, loss: Var) -> Result<(), AutogradError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(AutogradError::Argument(format!(
                "backward needs a 1x1 loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let n = self.nodes.len();
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; n];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                let len = g.len();
                let buf = self.leaf_grads[i].get_or_insert_with(|| GradBuf::Dense(vec![0.0; len]));
                buf.add_dense(&g);
                adj[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut adj);
            adj[i] = Some(g);
        }
        self.adjoints = adj;
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let needs = |v: Var| nodes[v.0].needs_grad;
        let val = |v: Var| nodes[v.0].value.get();
        let out = nodes[i].value.get();

        fn slot<'s>(adj: &'s mut [Option<Vec<f64>>], v: Var, len: usize) -> &'s mut Vec<f64> {
            adj[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if needs(*a) {
                    // dA = G · Bᵀ
                    let bt = tb.transpose();
                    let da = slot(adj, *a, m * k);
                    matmul_into(g, bt.data(), da, m, n, k);
                }
                if needs(*b) {
                    // dB = Aᵀ · G
                    let at = ta.transpose();
                    let db = slot(adj, *b, k * n);
                    matmul_into(at.data(), g, db, k, m, n);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = out.shape();
                let da = slot(adj, *a, r * c);
                // out is r×c, a is c×r
                for y in 0..r {
                    for x in 0..c {
                        da[x * r + y] += g[y * c + x];
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(nodes[i].op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if needs(*a) {
                    let da = slot(adj, *a, g.len());
                    da.iter_mut().zip(g).for_each(|(d, gv)| *d += gv);
                }
                if needs(*b) {
                    let db = slot(adj, *b, g.len());
                    db.iter_mut().zip(g).for_each(|(d, gv)| *d += sign * gv);
                }
            }
            Op::Hadamard(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if needs(*a) {
                    let da = slot(adj, *a, g.len());
                    for ((d, gv), bv) in da.iter_mut().zip(g).zip(tb.data()) {
                        *d += gv * bv;
                    }
                }
                if needs(*b) {
                    let db = slot(adj, *b, g.len());
                    for ((d, gv), av) in db.iter_mut().zip(g).zip(ta.data()) {
                        *d += gv * av;
                    }
                }
            }
            Op::Scale(a, c) => {
                let da = slot(adj, *a, g.len());
                da.iter_mut().zip(g).for_each(|(d, gv)| *d += c * gv);
            }
            Op::Relu(a) => {
                let ta = val(*a);
                let da = slot(adj, *a, g.len());
                for ((d, gv), x) in da.iter_mut().zip(g).zip(ta.data()) {
                    if *x > 0.0 {
                        *d += gv;
                    }
                }
            }
            Op::Sigmoid(a) => {
                let da = slot(adj, *a, g.len());
                for ((d, gv), y) in da.iter_mut().zip(g).zip(out.data()) {
                    *d += gv * y * (1.0 - y);
                }
            }
            Op::SoftmaxRows(a) => {
                let cols = out.cols();
                let da = slot(adj, *a, g.len());
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gr = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for c in 0..cols {
                        da[r * cols + c] += y[c] * (gr[c] - dot);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = val(*p).cols();
                    if needs(*p) {
                        let dp = slot(adj, *p, w);
                        dp.iter_mut().zip(&g[off..off + w]).for_each(|(d, gv)| *d += gv);
                    }
                    off += w;
                }
            }
            Op::Lookup(table, ids) => {
                let t = val(*table);
                let cols = t.cols();
                if matches!(nodes[table.0].op, Op::Leaf) {
                    let buf = self.leaf_grads[table.0].get_or_insert_with(|| GradBuf::Rows {
                        cols,
                        rows: BTreeMap::new(),
                    });
                    for (r, &id) in ids.iter().enumerate() {
                        buf.add_row(id, &g[r * cols..(r + 1) * cols]);
                    }
                } else {
                    let dt = slot(adj, *table, t.len());
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..cols {
                            dt[id * cols + c] += g[r * cols + c];
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let len = val(*a).len();
                let da = slot(adj, *a, len);
                da.iter_mut().for_each(|d| *d += g[0]);
            }
            Op::MeanRows(a) => {
                let ta = val(*a);
                let (rows, cols) = ta.shape();
                let inv = 1.0 / rows as f64;
                let da = slot(adj, *a, rows * cols);
                for r in 0..rows {
                    for c in 0..cols {
                        da[r * cols + c] += g[c] * inv;
                    }
                }
            }
            Op::WeightedRowSum(a, w) => {
                let (ta, tw) = (val(*a), val(*w));
                let (rows, cols) = ta.shape();
                if needs(*a) {
                    let da = slot(adj, *a, rows * cols);
                    for r in 0..rows {
                        let wr = tw.data()[r];
                        for c in 0..cols {
                            da[r * cols + c] += wr * g[c];
                        }
                    }
                }
                if needs(*w) {
                    let dw = slot(adj, *w, rows);
                    for (r, d) in dw.iter_mut().enumerate() {
                        *d += ta.row(r).iter().zip(g).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            Op::RowScale(a, w) => {
                let (ta, tw) = (val(*a), val(*w));
                let (rows, cols) = ta.shape();
                if needs(*a) {
                    let da = slot(adj, *a, rows * cols);
                    for r in 0..rows {
                        let wr = tw.data()[r];
                        for c in 0..cols {
                            da[r * cols + c] += wr * g[r * cols + c];
                        }
                    }
                }
                if needs(*w) {
                    let dw = slot(adj, *w, rows);
                    for (r, d) in dw.iter_mut().enumerate() {
                        let gr = &g[r * cols..(r + 1) * cols];
                        *d += ta.row(r).iter().zip(gr).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            Op::Reshape(a) => {
                let da = slot(adj, *a, g.len());
                da.iter_mut().zip(g).for_each(|(d, gv)| *d += gv);
            }
            Op::BceWithLogits(z, y) => {
                let zv = val(*z).scalar();
                let dz = slot(adj, *z, 1);
                dz[0] += g[0] * (sigmoid(zv) - y);
            }
        }
    }

    /// Gradient accumulated on a leaf, if any reached it.
    pub fn grad(&self, v: Var) -> Option<&GradBuf> {
        self.leaf_grads[v.0].as_ref()
    }

    /// Dense copy of a leaf gradient; zeros when nothing reached it.
    pub fn grad_dense(&self, v: Var) -> Tensor {
        let t = self.value(v);
        let data = match self.grad(v) {
            Some(buf) => buf.to_dense(t.len()),
            None => vec![0.0; t.len()],
        };
        Tensor::new(t.rows(), t.cols(), data).expect("leaf shape")
    }

    /// `∂loss/∂v` from the most recent backward pass, for any node.
    pub fn adjoint(&self, v: Var) -> Option<&[f64]> {
        self.adjoints.get(v.0).and_then(|a| a.as_deref())
    }

    /// Moves leaf gradients out, leaving the graph without accumulated grads.
    pub fn take_grad(&mut self, v: Var) -> Option<GradBuf> {
        self.leaf_grads[v.0].take()
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }
}

/// Logistic function, kept strictly inside (0, 1) even where f64 would round
/// to an endpoint.
pub fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
