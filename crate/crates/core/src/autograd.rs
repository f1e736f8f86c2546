//! Reverse-mode differentiation over matrix operations.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! value. [`Tape::backward`] walks the nodes in reverse and accumulates
//! adjoints. Only the operations the coreference pipeline needs are provided;
//! all of them work on whole matrices so a document forward pass is a few
//! hundred nodes, not millions of scalars.

use crate::tensor::{Matrix, Real};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Relu(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LogSumExpRows(Var, Option<Vec<bool>>),
    LayerNormRows(Var, f64),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    RowSum(Var),
    Sum(Var),
    Scatter(Var, Vec<usize>),
    Reshape(Var),
    SumRowGroups(Var, usize),
    MulCol(Var, Var),
}

struct Node<T> {
    value: Matrix<T>,
    op: Op,
}

pub struct Tape<T: Real = f64> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu<T: Real>(x: T) -> T {
    let half = T::of_f64(0.5);
    let c = T::of_f64(GELU_C);
    let k = T::of_f64(0.044715);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let half = T::of_f64(0.5);
    let c = T::of_f64(GELU_C);
    let k = T::of_f64(0.044715);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + T::of_f64(3.0) * k * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn masked(mask: &Option<Vec<bool>>, idx: usize) -> bool {
    mask.as_ref().is_some_and(|m| !m[idx])
}

fn softmax_rows<T: Real>(x: &Matrix<T>, mask: &Option<Vec<bool>>) -> Matrix<T> {
    let (rows, cols) = x.shape();
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let mut max = T::neg_infinity();
        for c in 0..cols {
            if !masked(mask, r * cols + c) && x.get(r, c) > max {
                max = x.get(r, c);
            }
        }
        if max == T::neg_infinity() {
            continue;
        }
        let mut total = T::zero();
        for c in 0..cols {
            if !masked(mask, r * cols + c) {
                let e = (x.get(r, c) - max).exp();
                out.set(r, c, e);
                total = total + e;
            }
        }
        for v in out.row_mut(r) {
            *v = *v / total;
        }
    }
    out
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar node");
        m.get(0, 0)
    }

    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_nt(self.value(b));
        self.push(v, Op::MatMulNt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds the `1 × cols` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        let (am, rm) = (self.value(a), self.value(r));
        assert_eq!(rm.shape(), (1, am.cols()), "add_row expects a matching row");
        let mut v = am.clone();
        for i in 0..v.rows() {
            for (x, &b) in v.row_mut(i).iter_mut().zip(rm.row(0)) {
                *x = *x + b;
            }
        }
        self.push(v, Op::AddRow(a, r))
    }

    /// Multiplies every row of `a` element-wise by the `1 × cols` row `r`.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Var {
        let (am, rm) = (self.value(a), self.value(r));
        assert_eq!(rm.shape(), (1, am.cols()), "mul_row expects a matching row");
        let mut v = am.clone();
        for i in 0..v.rows() {
            for (x, &b) in v.row_mut(i).iter_mut().zip(rm.row(0)) {
                *x = *x * b;
            }
        }
        self.push(v, Op::MulRow(a, r))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let k = T::of_f64(c);
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::Scale(a, c))
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| T::one() - x);
        self.push(v, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a))
    }

    /// Row-wise softmax. Masked-out entries (mask false) get probability 0.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<Vec<bool>>) -> Var {
        let v = softmax_rows(self.value(a), &mask);
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Row-wise log-sum-exp over unmasked entries; yields a `rows × 1` column.
    ///
    /// Every row must keep at least one entry.
    pub fn log_sum_exp_rows(&mut self, a: Var, mask: Option<Vec<bool>>) -> Var {
        let m = self.value(a);
        let (rows, cols) = m.shape();
        let mut out = Matrix::zeros(rows, 1);
        for r in 0..rows {
            let mut max = T::neg_infinity();
            for c in 0..cols {
                if !masked(&mask, r * cols + c) && m.get(r, c) > max {
                    max = m.get(r, c);
                }
            }
            assert!(max > T::neg_infinity(), "log_sum_exp over an empty row");
            let mut total = T::zero();
            for c in 0..cols {
                if !masked(&mask, r * cols + c) {
                    total = total + (m.get(r, c) - max).exp();
                }
            }
            out.set(r, 0, max + total.ln());
        }
        self.push(out, Op::LogSumExpRows(a, mask))
    }

    /// Normalizes each row to zero mean and unit variance (no affine).
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let m = self.value(a);
        let (rows, cols) = m.shape();
        let n = T::of_f64(cols as f64);
        let e = T::of_f64(eps);
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row = m.row(r);
            let mean = row.iter().fold(T::zero(), |s, &x| s + x) / n;
            let var = row
                .iter()
                .fold(T::zero(), |s, &x| s + (x - mean) * (x - mean))
                / n;
            let inv = T::one() / (var + e).sqrt();
            for (o, &x) in out.row_mut(r).iter_mut().zip(row) {
                *o = (x - mean) * inv;
            }
        }
        self.push(out, Op::LayerNormRows(a, eps))
    }

    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Var {
        let m = self.value(a);
        let mut out = Matrix::zeros(indices.len(), m.cols());
        for (i, &src) in indices.iter().enumerate() {
            out.row_mut(i).copy_from_slice(m.row(src));
        }
        self.push(out, Op::GatherRows(a, indices))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pm = self.value(p);
                assert_eq!(pm.rows(), rows, "concat_cols row mismatch");
                out.row_mut(r)[off..off + pm.cols()].copy_from_slice(pm.row(r));
                off += pm.cols();
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pm = self.value(p);
            assert_eq!(pm.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(pm.data());
            rows += pm.rows();
        }
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        let mut out = Matrix::zeros(m.rows(), len);
        for r in 0..m.rows() {
            out.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start, len))
    }

    /// Sums each row into a `rows × 1` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = (0..m.rows())
            .map(|r| m.row(r).iter().fold(T::zero(), |s, &x| s + x))
            .collect();
        self.push(Matrix::column_vector(data), Op::RowSum(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    /// Places the entries of `a` (read in row-major order) at the given flat
    /// positions of a fresh zero `rows × cols` matrix.
    pub fn scatter(&mut self, a: Var, positions: Vec<usize>, rows: usize, cols: usize) -> Var {
        let m = self.value(a);
        assert_eq!(m.data().len(), positions.len(), "scatter length mismatch");
        let mut out = Matrix::zeros(rows, cols);
        for (&p, &x) in positions.iter().zip(m.data()) {
            out.data_mut()[p] = out.data()[p] + x;
        }
        self.push(out, Op::Scatter(a, positions))
    }

    /// Same data, new shape (row-major order preserved).
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let m = self.value(a);
        assert_eq!(m.data().len(), rows * cols, "reshape size mismatch");
        let v = Matrix::from_vec(rows, cols, m.data().to_vec());
        self.push(v, Op::Reshape(a))
    }

    /// Sums consecutive blocks of `group` rows: row `i` of the result is the
    /// sum of rows `i*group .. (i+1)*group`.
    pub fn sum_row_groups(&mut self, a: Var, group: usize) -> Var {
        let m = self.value(a);
        assert!(group > 0 && m.rows().is_multiple_of(group), "row count not divisible by group");
        let mut out = Matrix::zeros(m.rows() / group, m.cols());
        for r in 0..m.rows() {
            let dst = r / group;
            for c in 0..m.cols() {
                out.set(dst, c, out.get(dst, c) + m.get(r, c));
            }
        }
        self.push(out, Op::SumRowGroups(a, group))
    }

    /// Multiplies row `i` of `a` by entry `i` of the `rows × 1` column `c`.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Var {
        let (am, cm) = (self.value(a), self.value(c));
        assert_eq!(cm.shape(), (am.rows(), 1), "mul_col expects a matching column");
        let mut v = am.clone();
        for r in 0..v.rows() {
            let k = cm.get(r, 0);
            v.row_mut(r).iter_mut().for_each(|x| *x = *x * k);
        }
        self.push(v, Op::MulCol(a, c))
    }

    /// Adjoints of every node with respect to the scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients<T> {
        assert_eq!(self.value(output).shape(), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::filled(1, 1, T::one()));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => grads[idx] = Some(g),
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(self.value(*b));
                    let db = self.value(*a).matmul_tn(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulNt(a, b) => {
                    let da = g.matmul(self.value(*b));
                    let db = g.matmul_tn(self.value(*a));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|x| -x));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddRow(a, r) => {
                    let mut dr = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, &x) in dr.row_mut(0).iter_mut().zip(g.row(i)) {
                            *d = *d + x;
                        }
                    }
                    accumulate(&mut grads, *r, dr);
                    accumulate(&mut grads, *a, g);
                }
                Op::MulRow(a, r) => {
                    let (am, rm) = (self.value(*a), self.value(*r));
                    let mut da = g.clone();
                    let mut dr = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for c in 0..g.cols() {
                            da.set(i, c, g.get(i, c) * rm.get(0, c));
                            dr.set(0, c, dr.get(0, c) + g.get(i, c) * am.get(i, c));
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *r, dr);
                }
                Op::Scale(a, c) => {
                    let k = T::of_f64(*c);
                    accumulate(&mut grads, *a, g.map(|x| x * k));
                }
                Op::OneMinus(a) => accumulate(&mut grads, *a, g.map(|x| -x)),
                Op::Sigmoid(a) => {
                    let d = g.zip_map(&node.value, |gx, y| gx * y * (T::one() - y));
                    accumulate(&mut grads, *a, d);
                }
                Op::Relu(a) => {
                    let d = g.zip_map(self.value(*a), |gx, x| if x > T::zero() { gx } else { T::zero() });
                    accumulate(&mut grads, *a, d);
                }
                Op::Gelu(a) => {
                    let d = g.zip_map(self.value(*a), |gx, x| gx * gelu_grad(x));
                    accumulate(&mut grads, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot = y
                            .row(r)
                            .iter()
                            .zip(g.row(r))
                            .fold(T::zero(), |s, (&p, &q)| s + p * q);
                        for c in 0..y.cols() {
                            d.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::LogSumExpRows(a, mask) => {
                    let p = softmax_rows(self.value(*a), mask);
                    let mut d = p;
                    for r in 0..d.rows() {
                        let gr = g.get(r, 0);
                        for v in d.row_mut(r) {
                            *v = *v * gr;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::LayerNormRows(a, eps) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let (rows, cols) = y.shape();
                    let n = T::of_f64(cols as f64);
                    let e = T::of_f64(*eps);
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let row = x.row(r);
                        let mean = row.iter().fold(T::zero(), |s, &v| s + v) / n;
                        let var = row
                            .iter()
                            .fold(T::zero(), |s, &v| s + (v - mean) * (v - mean))
                            / n;
                        let inv = T::one() / (var + e).sqrt();
                        let gr = g.row(r);
                        let yr = y.row(r);
                        let mean_g = gr.iter().fold(T::zero(), |s, &v| s + v) / n;
                        let mean_gy = gr
                            .iter()
                            .zip(yr)
                            .fold(T::zero(), |s, (&a, &b)| s + a * b)
                            / n;
                        for c in 0..cols {
                            d.set(r, c, inv * (gr[c] - mean_g - yr[c] * mean_gy));
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::GatherRows(a, indices) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    for (i, &s) in indices.iter().enumerate() {
                        for (o, &x) in d.row_mut(s).iter_mut().zip(g.row(i)) {
                            *o = *o + x;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        let mut d = Matrix::zeros(g.rows(), pc);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + pc]);
                        }
                        off += pc;
                        accumulate(&mut grads, p, d);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pr = self.value(p).rows();
                        let cols = g.cols();
                        let d = Matrix::from_vec(pr, cols, g.data()[off * cols..(off + pr) * cols].to_vec());
                        off += pr;
                        accumulate(&mut grads, p, d);
                    }
                }
                Op::SliceCols(a, start, len) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        d.row_mut(r)[*start..start + len].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::RowSum(a) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        let gr = g.get(r, 0);
                        for v in d.row_mut(r) {
                            *v = gr;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    let src = self.value(*a);
                    accumulate(&mut grads, *a, Matrix::filled(src.rows(), src.cols(), g.get(0, 0)));
                }
                Op::Scatter(a, positions) => {
                    let src = self.value(*a);
                    let data = positions.iter().map(|&p| g.data()[p]).collect();
                    accumulate(&mut grads, *a, Matrix::from_vec(src.rows(), src.cols(), data));
                }
                Op::Reshape(a) => {
                    let src = self.value(*a);
                    let d = Matrix::from_vec(src.rows(), src.cols(), g.into_data());
                    accumulate(&mut grads, *a, d);
                }
                Op::SumRowGroups(a, group) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        d.row_mut(r).copy_from_slice(g.row(r / group));
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::MulCol(a, c) => {
                    let (am, cm) = (self.value(*a), self.value(*c));
                    let mut da = g.clone();
                    let mut dc = Matrix::zeros(cm.rows(), 1);
                    for r in 0..g.rows() {
                        let k = cm.get(r, 0);
                        let mut acc = T::zero();
                        for (x, &av) in da.row_mut(r).iter_mut().zip(am.row(r)) {
                            acc = acc + *x * av;
                            *x = *x * k;
                        }
                        dc.set(r, 0, acc);
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *c, dc);
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Matrix<T>>], v: Var, d: Matrix<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients<T: Real> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Adjoint of a leaf node, or `None` if the output does not depend on it.
    /// Interior adjoints are released during the backward sweep.
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}
