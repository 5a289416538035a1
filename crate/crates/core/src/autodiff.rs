//! Dense row-major matrices and a small reverse-mode autodiff tape.
//!
//! The tape records every operation of one forward pass; [`Graph::backward`]
//! walks it in reverse and returns gradients for the parameter leaves.
//! Everything is `f64` so finite-difference checks are meaningful.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn scalar(v: f64) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `a (n×k) · b (k×m)`
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, bv) in out_row.iter_mut().zip(b.row(k)) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a (n×k) · bᵀ` with `b (m×k)`
pub fn matmul_bt(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(ar, b.row(j));
        }
    }
    out
}

/// `aᵀ (k×n)ᵀ · b` with `a (n×k)`, `b (n×m)`: result `k×m`.
pub fn matmul_at(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.cols, b.cols);
    for n in 0..a.rows {
        let br = b.row(n);
        for (k, &av) in a.row(n).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out.data[k * b.cols..(k + 1) * b.cols];
            for (o, bv) in out_row.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf { param: Option<usize> },
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Gelu(NodeId),
    SoftmaxRows(NodeId),
    /// Stores 1/sqrt(var + eps) per row.
    Standardize(NodeId, Vec<f64>),
    GatherRows(NodeId, Vec<usize>),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SpanMeans(Vec<(NodeId, usize, usize)>),
    /// Stores each row's L2 norm.
    L2NormalizeRows(NodeId, Vec<f64>),
    /// Scalar computed outside the tape with its gradient w.r.t. `input`.
    ScalarFn { input: NodeId, grad: Matrix },
    WeightedSum(Vec<(NodeId, f64)>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Gradients of a scalar w.r.t. parameter leaves, indexed by parameter slot.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub grads: Vec<Option<Matrix>>,
}

impl ParamGrads {
    pub fn get(&self, param: usize) -> Option<&Matrix> {
        self.grads.get(param).and_then(Option::as_ref)
    }
}

/// A forward-pass tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf { param: None })
    }

    /// Leaf whose gradient is reported under `slot`.
    pub fn param(&mut self, slot: usize, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf { param: Some(slot) })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.cols, vb.rows, "matmul inner dimensions");
        let v = matmul(va, vb);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.cols, vb.cols, "matmul_bt inner dimensions");
        let v = matmul_bt(va, vb);
        self.push(v, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        assert_eq!(v.shape(), self.value(b).shape(), "add shapes");
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1×cols` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let r = self.value(row);
        assert_eq!((1, v.cols), r.shape(), "add_row shapes");
        for i in 0..v.rows {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1×cols` row.
    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let r = self.value(row);
        assert_eq!((1, v.cols), r.shape(), "mul_row shapes");
        for i in 0..v.rows {
            for (x, g) in v.row_mut(i).iter_mut().zip(&r.data) {
                *x *= g;
            }
        }
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x *= s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x = gelu(*x));
        self.push(v, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Per-row `(x - mean) / sqrt(var + eps)`; the affine part of layer norm is
    /// built from [`Graph::mul_row`] and [`Graph::add_row`].
    pub fn standardize_rows(&mut self, a: NodeId, eps: f64) -> NodeId {
        let mut v = self.value(a).clone();
        let n = v.cols as f64;
        let mut inv_std = Vec::with_capacity(v.rows);
        for i in 0..v.rows {
            let row = v.row_mut(i);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let s = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * s);
            inv_std.push(s);
        }
        self.push(v, Op::Standardize(a, inv_std))
    }

    pub fn gather_rows(&mut self, a: NodeId, rows: &[usize]) -> NodeId {
        let src = self.value(a);
        let mut v = Matrix::zeros(rows.len(), src.cols);
        for (i, &r) in rows.iter().enumerate() {
            v.row_mut(i).copy_from_slice(src.row(r));
        }
        self.push(v, Op::GatherRows(a, rows.to_vec()))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let src = self.value(a);
        assert!(start < end && end <= src.cols, "slice_cols bounds");
        let mut v = Matrix::zeros(src.rows, end - start);
        for i in 0..src.rows {
            v.row_mut(i).copy_from_slice(&src.row(i)[start..end]);
        }
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut v = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in parts {
                let pv = self.value(*p);
                assert_eq!(pv.rows, rows, "concat_cols rows");
                v.row_mut(i)[off..off + pv.cols].copy_from_slice(pv.row(i));
                off += pv.cols;
            }
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.cols, cols, "concat_rows cols");
            data.extend_from_slice(&pv.data);
            rows += pv.rows;
        }
        self.push(Matrix { rows, cols, data }, Op::ConcatRows(parts.to_vec()))
    }

    /// One output row per `(source, start, end)`: the mean of rows `start..end`.
    pub fn span_means(&mut self, spans: &[(NodeId, usize, usize)]) -> NodeId {
        let cols = spans.first().map_or(0, |s| self.value(s.0).cols);
        let mut v = Matrix::zeros(spans.len(), cols);
        for (i, &(src, start, end)) in spans.iter().enumerate() {
            assert!(start < end, "empty span");
            let sv = self.value(src);
            let inv = 1.0 / (end - start) as f64;
            for r in start..end {
                for (o, x) in v.row_mut(i).iter_mut().zip(sv.row(r)) {
                    *o += x * inv;
                }
            }
        }
        self.push(v, Op::SpanMeans(spans.to_vec()))
    }

    pub fn l2_normalize_rows(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let mut norms = Vec::with_capacity(v.rows);
        for i in 0..v.rows {
            let row = v.row_mut(i);
            let n = dot(row, row).sqrt();
            row.iter_mut().for_each(|x| *x /= n);
            norms.push(n);
        }
        self.push(v, Op::L2NormalizeRows(a, norms))
    }

    /// Inserts a scalar whose value and input-gradient were computed elsewhere.
    pub fn scalar_fn(&mut self, input: NodeId, value: f64, grad: Matrix) -> NodeId {
        assert_eq!(grad.shape(), self.value(input).shape(), "scalar_fn gradient shape");
        self.push(Matrix::scalar(value), Op::ScalarFn { input, grad })
    }

    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> NodeId {
        let mut v = Matrix::zeros(self.value(terms[0].0).rows, self.value(terms[0].0).cols);
        for &(t, w) in terms {
            for (o, x) in v.data.iter_mut().zip(&self.value(t).data) {
                *o += w * x;
            }
        }
        self.push(v, Op::WeightedSum(terms.to_vec()))
    }

    /// Reverse pass from a `1×1` node. `param_slots` sizes the returned gradient table.
    pub fn backward(&self, root: NodeId, param_slots: usize) -> ParamGrads {
        let mut out = ParamGrads {
            grads: vec![None; param_slots],
        };
        self.reverse(root, None, |slot, g| match &mut out.grads[slot] {
            Some(existing) => existing.add_assign(&g),
            s @ None => *s = Some(g),
        });
        out
    }

    /// Gradient of `root` with respect to any node of the tape.
    pub fn grad_wrt(&self, root: NodeId, target: NodeId) -> Matrix {
        let (rows, cols) = self.value(target).shape();
        self.reverse(root, Some(target), |_, _| {})
            .unwrap_or_else(|| Matrix::zeros(rows, cols))
    }

    fn reverse(
        &self,
        root: NodeId,
        keep: Option<NodeId>,
        mut on_param: impl FnMut(usize, Matrix),
    ) -> Option<Matrix> {
        assert_eq!(self.value(root).shape(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Matrix>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Matrix::scalar(1.0));
        let mut kept = None;

        fn acc(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if keep == Some(NodeId(idx)) {
                kept = Some(g.clone());
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf { param } => {
                    if let Some(slot) = param {
                        on_param(*slot, g);
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = matmul_bt(&g, self.value(*b));
                    let gb = matmul_at(self.value(*a), &g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulBt(a, b) => {
                    // y = a bᵀ: da = g b, db = gᵀ a
                    let ga = matmul(&g, self.value(*b));
                    let gb = matmul_at(&g, self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for (o, x) in gr.data.iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *row, gr);
                }
                Op::MulRow(a, row) => {
                    let av = self.value(*a);
                    let rv = self.value(*row);
                    let mut ga = g.clone();
                    let mut gr = Matrix::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for c in 0..g.cols {
                            ga.data[i * g.cols + c] *= rv.data[c];
                            gr.data[c] += g.data[i * g.cols + c] * av.data[i * g.cols + c];
                        }
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *row, gr);
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.data.iter_mut().for_each(|x| *x *= s);
                    acc(&mut grads, *a, ga);
                }
                Op::Gelu(a) => {
                    let mut ga = g;
                    for (x, inp) in ga.data.iter_mut().zip(&self.value(*a).data) {
                        *x *= gelu_grad(*inp);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows, y.cols);
                    for i in 0..y.rows {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let inner = dot(yr, gr);
                        for (o, (yv, gv)) in ga.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yv * (gv - inner);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Standardize(a, inv_std) => {
                    let y = &node.value;
                    let n = y.cols as f64;
                    let mut ga = Matrix::zeros(y.rows, y.cols);
                    for i in 0..y.rows {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gy = dot(gr, yr) / n;
                        for (o, (yv, gv)) in ga.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = inv_std[i] * (gv - mean_g - yv * mean_gy);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, rows) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows, src.cols);
                    for (i, &r) in rows.iter().enumerate() {
                        for (o, x) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows, src.cols);
                    for i in 0..g.rows {
                        ga.row_mut(i)[*start..*start + g.cols].copy_from_slice(g.row(i));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let cols = self.value(*p).cols;
                        let mut gp = Matrix::zeros(g.rows, cols);
                        for i in 0..g.rows {
                            gp.row_mut(i).copy_from_slice(&g.row(i)[off..off + cols]);
                        }
                        off += cols;
                        acc(&mut grads, *p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let rows = self.value(*p).rows;
                        let gp = Matrix {
                            rows,
                            cols: g.cols,
                            data: g.data[off * g.cols..(off + rows) * g.cols].to_vec(),
                        };
                        off += rows;
                        acc(&mut grads, *p, gp);
                    }
                }
                Op::SpanMeans(spans) => {
                    for (i, &(src, start, end)) in spans.iter().enumerate() {
                        let sv = self.value(src);
                        let mut gs = Matrix::zeros(sv.rows, sv.cols);
                        let inv = 1.0 / (end - start) as f64;
                        for r in start..end {
                            for (o, x) in gs.row_mut(r).iter_mut().zip(g.row(i)) {
                                *o = x * inv;
                            }
                        }
                        acc(&mut grads, src, gs);
                    }
                }
                Op::L2NormalizeRows(a, norms) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows, y.cols);
                    for i in 0..y.rows {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let proj = dot(yr, gr);
                        for (o, (yv, gv)) in ga.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = (gv - yv * proj) / norms[i];
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScalarFn { input, grad } => {
                    let mut gi = grad.clone();
                    let s = g.data[0];
                    gi.data.iter_mut().for_each(|x| *x *= s);
                    acc(&mut grads, *input, gi);
                }
                Op::WeightedSum(terms) => {
                    for &(t, w) in terms {
                        let mut gt = g.clone();
                        gt.data.iter_mut().for_each(|x| *x *= w);
                        acc(&mut grads, t, gt);
                    }
                }
            }
        }
        kept
    }
}
