//! Reverse-mode differentiation over 2-D values.
//!
//! Every value on the tape is a `rows × cols` matrix (vectors are `1 × n`,
//! scalars `1 × 1`). Nodes are appended in evaluation order, so the node list
//! is already a topological order and backward is a single reverse sweep.

use super::tensor::gemm;
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Val<'a, R> {
    Owned(Vec<R>),
    Borrowed(&'a [R]),
}

impl<R> Val<'_, R> {
    fn as_slice(&self) -> &[R] {
        match self {
            Val::Owned(v) => v,
            Val::Borrowed(v) => v,
        }
    }
}

enum Op<R> {
    Constant,
    Param(usize),
    /// `x wᵀ + b` with `w` stored `out × in`.
    Linear {
        x: usize,
        w: usize,
        b: Option<usize>,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, R),
    AddScalar(usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Square(usize),
    Softmax(usize),
    LogSoftmax(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols {
        x: usize,
        start: usize,
    },
    SliceRows {
        x: usize,
        start: usize,
    },
    Embedding {
        table: usize,
        index: Vec<usize>,
    },
    Gather {
        x: usize,
        index: Vec<usize>,
    },
    RowScale {
        x: usize,
        scale: Vec<R>,
    },
    Clamp {
        x: usize,
        lo: R,
        hi: R,
    },
    Min(usize, usize),
    Max(usize, usize),
    SumCols(usize),
    Sum(usize),
    Mean(usize),
}

struct Node<'a, R> {
    val: Val<'a, R>,
    rows: usize,
    cols: usize,
    op: Op<R>,
    needs_grad: bool,
}

/// Gradients produced by one backward pass, indexed by parameter id.
#[derive(Debug, Clone, Default)]
pub struct Gradients<R> {
    grads: Vec<Option<Vec<R>>>,
}

impl<R: Real> Gradients<R> {
    pub fn get(&self, param: usize) -> Option<&[R]> {
        self.grads.get(param).and_then(|g| g.as_deref())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.iter().all(|g| g.is_none())
    }

    fn add(&mut self, param: usize, g: Vec<R>) {
        if self.grads.len() <= param {
            self.grads.resize(param + 1, None);
        }
        match &mut self.grads[param] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
            slot => *slot = Some(g),
        }
    }

    /// Adds these gradients into the accumulators of `params` (by position).
    pub fn accumulate_into(&self, params: &mut [Tensor<R>]) -> Result<()> {
        for (i, g) in self.grads.iter().enumerate() {
            if let Some(g) = g {
                let p = params.get_mut(i).ok_or_else(|| {
                    Error::Usage(format!("gradient for unknown parameter {i}"))
                })?;
                p.accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TapeState {
    Recording,
    Consumed,
}

/// Records primitive applications for reverse-mode differentiation.
///
/// Parameters are borrowed for the lifetime of the tape; gradients come back
/// as a [`Gradients`] value so the caller can fold them into its tensors once
/// the tape is gone.
pub struct Tape<'a, R: Real> {
    nodes: Vec<Node<'a, R>>,
    state: TapeState,
}

impl<R: Real> Default for Tape<'_, R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, R: Real> Tape<'a, R> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            state: TapeState::Recording,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, val: Vec<R>, rows: usize, cols: usize, op: Op<R>, needs_grad: bool) -> Var {
        debug_assert_eq!(val.len(), rows * cols);
        self.nodes.push(Node {
            val: Val::Owned(val),
            rows,
            cols,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<'a, R> {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[R] {
        self.nodes[v.0].val.as_slice()
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> R {
        self.value(v)[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).needs_grad
    }

    /// Copies a value into the tape as a non-trainable input.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<R>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(Error::shape("constant", &[rows, cols], &[data.len()]));
        }
        Ok(self.push(data, rows, cols, Op::Constant, false))
    }

    pub fn constant_tensor(&mut self, t: &'a Tensor<R>) -> Var {
        let (rows, cols) = t.matrix_dims();
        self.nodes.push(Node {
            val: Val::Borrowed(t.data()),
            rows,
            cols,
            op: Op::Constant,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds a trainable tensor under parameter id `id`.
    pub fn param(&mut self, id: usize, t: &'a Tensor<R>) -> Var {
        let (rows, cols) = t.matrix_dims();
        self.nodes.push(Node {
            val: Val::Borrowed(t.data()),
            rows,
            cols,
            op: Op::Param(id),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, f: impl Fn(R) -> R, op: Op<R>) -> Var {
        let n = self.node(x);
        let (rows, cols, ng) = (n.rows, n.cols, n.needs_grad);
        let out: Vec<R> = n.val.as_slice().iter().map(|&v| f(v)).collect();
        self.push(out, rows, cols, op, ng)
    }

    fn same_dims(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.rows != nb.rows || na.cols != nb.cols {
            return Err(Error::shape(op, &[na.rows, na.cols], &[nb.rows, nb.cols]));
        }
        Ok((na.rows, na.cols))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(R, R) -> R,
        op: Op<R>,
    ) -> Result<Var> {
        let (rows, cols) = self.same_dims(name, a, b)?;
        let ng = self.node(a).needs_grad || self.node(b).needs_grad;
        let out: Vec<R> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(out, rows, cols, op, ng))
    }

    /// `x wᵀ + b` for `x: n×in`, `w: out×in`, `b: 1×out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, din) = self.dims(x);
        let (dout, win) = self.dims(w);
        if din != win {
            return Err(Error::shape("linear", &[n, din], &[dout, win]));
        }
        let mut out = vec![R::zero(); n * dout];
        if let Some(b) = b {
            let (br, bc) = self.dims(b);
            if br != 1 || bc != dout {
                return Err(Error::shape("linear bias", &[dout, win], &[br, bc]));
            }
            let bv = self.value(b);
            for row in out.chunks_exact_mut(dout) {
                row.copy_from_slice(bv);
            }
        }
        gemm(n, din, dout, self.value(x), false, self.value(w), true, R::one(), &mut out);
        let ng = self.node(x).needs_grad
            || self.node(w).needs_grad
            || b.is_some_and(|b| self.node(b).needs_grad);
        Ok(self.push(
            out,
            n,
            dout,
            Op::Linear {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
            },
            ng,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("minimum", a, b, |x, y| if x <= y { x } else { y }, Op::Min(a.0, b.0))
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("maximum", a, b, |x, y| if x >= y { x } else { y }, Op::Max(a.0, b.0))
    }

    pub fn scale(&mut self, x: Var, c: R) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x.0, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: R) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x.0))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > R::zero() { v } else { R::zero() }, Op::Relu(x.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x.0))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.exp(), Op::Exp(x.0))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x.0))
    }

    pub fn clamp(&mut self, x: Var, lo: R, hi: R) -> Var {
        self.unary(x, |v| v.max(lo).min(hi), Op::Clamp { x: x.0, lo, hi })
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (rows, cols) = self.dims(x);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(cols.max(1)) {
            softmax_in_place(row);
        }
        let ng = self.node(x).needs_grad;
        self.push(out, rows, cols, Op::Softmax(x.0), ng)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let (rows, cols) = self.dims(x);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(cols.max(1)) {
            log_softmax_in_place(row);
        }
        let ng = self.node(x).needs_grad;
        self.push(out, rows, cols, Op::LogSoftmax(x.0), ng)
    }

    /// Concatenates along the feature (column) axis.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let rows = self.dims(xs[0]).0;
        let mut cols = 0;
        for &x in xs {
            let (r, c) = self.dims(x);
            if r != rows {
                return Err(Error::shape("concat_cols", &[rows, cols], &[r, c]));
            }
            cols += c;
        }
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &x in xs {
                let c = self.dims(x).1;
                out.extend_from_slice(&self.value(x)[r * c..(r + 1) * c]);
            }
        }
        let ng = xs.iter().any(|&x| self.node(x).needs_grad);
        Ok(self.push(out, rows, cols, Op::ConcatCols(xs.iter().map(|v| v.0).collect()), ng))
    }

    /// Stacks along the row axis.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let cols = self.dims(xs[0]).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &x in xs {
            let (r, c) = self.dims(x);
            if c != cols {
                return Err(Error::shape("concat_rows", &[rows, cols], &[r, c]));
            }
            rows += r;
            out.extend_from_slice(self.value(x));
        }
        let ng = xs.iter().any(|&x| self.node(x).needs_grad);
        Ok(self.push(out, rows, cols, Op::ConcatRows(xs.iter().map(|v| v.0).collect()), ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims(x);
        if start + len > cols {
            return Err(Error::shape("slice_cols", &[rows, cols], &[start, len]));
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let ng = self.node(x).needs_grad;
        Ok(self.push(out, rows, len, Op::SliceCols { x: x.0, start }, ng))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims(x);
        if start + len > rows {
            return Err(Error::shape("slice_rows", &[rows, cols], &[start, len]));
        }
        let out = self.value(x)[start * cols..(start + len) * cols].to_vec();
        let ng = self.node(x).needs_grad;
        Ok(self.push(out, len, cols, Op::SliceRows { x: x.0, start }, ng))
    }

    /// Gathers rows `index[i]` of `table` into row `i` of the result.
    pub fn embedding(&mut self, table: Var, index: &[usize]) -> Result<Var> {
        let (vocab, dim) = self.dims(table);
        if let Some(&bad) = index.iter().find(|&&i| i >= vocab) {
            return Err(Error::TokenRange { token: bad, vocab });
        }
        let src = self.value(table);
        let mut out = Vec::with_capacity(index.len() * dim);
        for &i in index {
            out.extend_from_slice(&src[i * dim..(i + 1) * dim]);
        }
        let ng = self.node(table).needs_grad;
        Ok(self.push(
            out,
            index.len(),
            dim,
            Op::Embedding {
                table: table.0,
                index: index.to_vec(),
            },
            ng,
        ))
    }

    /// Picks `x[r, index[r]]` into an `n × 1` column.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (rows, cols) = self.dims(x);
        if index.len() != rows {
            return Err(Error::shape("gather", &[rows, cols], &[index.len()]));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= cols) {
            return Err(Error::TokenRange {
                token: bad,
                vocab: cols,
            });
        }
        let src = self.value(x);
        let out = index.iter().enumerate().map(|(r, &i)| src[r * cols + i]).collect();
        let ng = self.node(x).needs_grad;
        Ok(self.push(
            out,
            rows,
            1,
            Op::Gather {
                x: x.0,
                index: index.to_vec(),
            },
            ng,
        ))
    }

    /// Multiplies row `r` by the constant `scale[r]`.
    pub fn row_scale(&mut self, x: Var, scale: &[R]) -> Result<Var> {
        let (rows, cols) = self.dims(x);
        if scale.len() != rows {
            return Err(Error::shape("row_scale", &[rows, cols], &[scale.len()]));
        }
        let mut out = self.value(x).to_vec();
        for (row, &s) in out.chunks_exact_mut(cols.max(1)).zip(scale) {
            row.iter_mut().for_each(|v| *v *= s);
        }
        let ng = self.node(x).needs_grad;
        Ok(self.push(
            out,
            rows,
            cols,
            Op::RowScale {
                x: x.0,
                scale: scale.to_vec(),
            },
            ng,
        ))
    }

    /// Row sums as an `n × 1` column.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let (rows, cols) = self.dims(x);
        let out = self
            .value(x)
            .chunks_exact(cols.max(1))
            .map(|r| r.iter().copied().sum())
            .collect();
        let ng = self.node(x).needs_grad;
        self.push(out, rows, 1, Op::SumCols(x.0), ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        let ng = self.node(x).needs_grad;
        self.push(vec![s], 1, 1, Op::Sum(x.0), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s: R = v.iter().copied().sum::<R>() / R::from_f64(v.len().max(1) as f64);
        let ng = self.node(x).needs_grad;
        self.push(vec![s], 1, 1, Op::Mean(x.0), ng)
    }

    /// Reverse sweep from the scalar `loss`.
    ///
    /// The tape is cleared afterwards; a second call without recording a new
    /// forward pass fails with [`Error::TapeConsumed`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<R>> {
        if self.state == TapeState::Consumed {
            return Err(Error::TapeConsumed);
        }
        let (r, c) = self.dims(loss);
        if r * c != 1 {
            return Err(Error::shape("backward", &[r, c], &[1, 1]));
        }
        if !self.node(loss).needs_grad {
            return Err(Error::Detached);
        }

        let mut grads: Vec<Option<Vec<R>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![R::one()]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backprop_node(i, g, &mut grads, &mut out);
        }

        self.nodes.clear();
        self.state = TapeState::Consumed;
        Ok(out)
    }

    /// Clears recorded nodes so the tape can be reused for a fresh forward pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.state = TapeState::Recording;
    }

    fn backprop_node(
        &self,
        i: usize,
        g: Vec<R>,
        grads: &mut [Option<Vec<R>>],
        params: &mut Gradients<R>,
    ) {
        let node = &self.nodes[i];
        let y = node.val.as_slice();
        let (rows, cols) = (node.rows, node.cols);
        let val = |j: usize| self.nodes[j].val.as_slice();
        let wants = |j: usize| self.nodes[j].needs_grad;

        match &node.op {
            Op::Constant => {}
            Op::Param(id) => params.add(*id, g),
            Op::Linear { x, w, b } => {
                let (din, dout) = (self.nodes[*x].cols, cols);
                if wants(*x) {
                    let acc = slot(grads, *x, rows * din);
                    gemm(rows, dout, din, &g, false, val(*w), false, R::one(), acc);
                }
                if wants(*w) {
                    let acc = slot(grads, *w, dout * din);
                    gemm(dout, rows, din, &g, true, val(*x), false, R::one(), acc);
                }
                if let Some(b) = b {
                    if wants(*b) {
                        let acc = slot(grads, *b, dout);
                        for row in g.chunks_exact(dout) {
                            acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for &(j, sign) in &[(*a, R::one()), (*b, R::one())] {
                    if wants(j) {
                        axpy(slot(grads, j, g.len()), sign, &g);
                    }
                }
            }
            Op::Sub(a, b) => {
                for &(j, sign) in &[(*a, R::one()), (*b, -R::one())] {
                    if wants(j) {
                        axpy(slot(grads, j, g.len()), sign, &g);
                    }
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let other = val(*b);
                    let acc = slot(grads, *a, g.len());
                    for k in 0..g.len() {
                        acc[k] += g[k] * other[k];
                    }
                }
                if wants(*b) {
                    let other = val(*a);
                    let acc = slot(grads, *b, g.len());
                    for k in 0..g.len() {
                        acc[k] += g[k] * other[k];
                    }
                }
            }
            Op::Min(a, b) | Op::Max(a, b) => {
                let is_min = matches!(node.op, Op::Min(..));
                let (va, vb) = (val(*a), val(*b));
                // Ties route the gradient to the left operand.
                let left = |k: usize| if is_min { va[k] <= vb[k] } else { va[k] >= vb[k] };
                if wants(*a) {
                    let acc = slot(grads, *a, g.len());
                    for k in 0..g.len() {
                        if left(k) {
                            acc[k] += g[k];
                        }
                    }
                }
                if wants(*b) {
                    let acc = slot(grads, *b, g.len());
                    for k in 0..g.len() {
                        if !left(k) {
                            acc[k] += g[k];
                        }
                    }
                }
            }
            Op::Scale(x, c) => axpy(slot(grads, *x, g.len()), *c, &g),
            Op::AddScalar(x) => axpy(slot(grads, *x, g.len()), R::one(), &g),
            Op::Relu(x) => {
                let acc = slot(grads, *x, g.len());
                for k in 0..g.len() {
                    if y[k] > R::zero() {
                        acc[k] += g[k];
                    }
                }
            }
            Op::Tanh(x) => {
                let acc = slot(grads, *x, g.len());
                for k in 0..g.len() {
                    acc[k] += g[k] * (R::one() - y[k] * y[k]);
                }
            }
            Op::Sigmoid(x) => {
                let acc = slot(grads, *x, g.len());
                for k in 0..g.len() {
                    acc[k] += g[k] * y[k] * (R::one() - y[k]);
                }
            }
            Op::Exp(x) => {
                let acc = slot(grads, *x, g.len());
                for k in 0..g.len() {
                    acc[k] += g[k] * y[k];
                }
            }
            Op::Square(x) => {
                let xv = val(*x);
                let two = R::from_f64(2.0);
                let acc = slot(grads, *x, g.len());
                for k in 0..g.len() {
                    acc[k] += g[k] * two * xv[k];
                }
            }
            Op::Clamp { x, lo, hi } => {
                let xv = val(*x);
                let acc = slot(grads, *x, g.len());
                for k in 0..g.len() {
                    if xv[k] >= *lo && xv[k] <= *hi {
                        acc[k] += g[k];
                    }
                }
            }
            Op::Softmax(x) => {
                let acc = slot(grads, *x, g.len());
                for r in 0..rows {
                    let (yr, gr) = (&y[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    let dot: R = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for k in 0..cols {
                        acc[r * cols + k] += yr[k] * (gr[k] - dot);
                    }
                }
            }
            Op::LogSoftmax(x) => {
                let acc = slot(grads, *x, g.len());
                for r in 0..rows {
                    let (yr, gr) = (&y[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    let total: R = gr.iter().copied().sum();
                    for k in 0..cols {
                        acc[r * cols + k] += gr[k] - yr[k].exp() * total;
                    }
                }
            }
            Op::ConcatCols(xs) => {
                let mut offset = 0;
                for &j in xs {
                    let c = self.nodes[j].cols;
                    if wants(j) {
                        let acc = slot(grads, j, rows * c);
                        for r in 0..rows {
                            let src = &g[r * cols + offset..r * cols + offset + c];
                            axpy(&mut acc[r * c..(r + 1) * c], R::one(), src);
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for &j in xs {
                    let n = self.nodes[j].rows * cols;
                    if wants(j) {
                        axpy(slot(grads, j, n), R::one(), &g[offset..offset + n]);
                    }
                    offset += n;
                }
            }
            Op::SliceCols { x, start } => {
                let src_cols = self.nodes[*x].cols;
                let acc = slot(grads, *x, rows * src_cols);
                for r in 0..rows {
                    let dst = &mut acc[r * src_cols + start..r * src_cols + start + cols];
                    axpy(dst, R::one(), &g[r * cols..(r + 1) * cols]);
                }
            }
            Op::SliceRows { x, start } => {
                let src_len = self.nodes[*x].rows * cols;
                let acc = slot(grads, *x, src_len);
                axpy(&mut acc[start * cols..(start + rows) * cols], R::one(), &g);
            }
            Op::Embedding { table, index } => {
                let vocab = self.nodes[*table].rows;
                let acc = slot(grads, *table, vocab * cols);
                for (r, &t) in index.iter().enumerate() {
                    axpy(&mut acc[t * cols..(t + 1) * cols], R::one(), &g[r * cols..(r + 1) * cols]);
                }
            }
            Op::Gather { x, index } => {
                let src_cols = self.nodes[*x].cols;
                let acc = slot(grads, *x, rows * src_cols);
                for (r, &k) in index.iter().enumerate() {
                    acc[r * src_cols + k] += g[r];
                }
            }
            Op::RowScale { x, scale } => {
                let acc = slot(grads, *x, g.len());
                for r in 0..rows {
                    for k in 0..cols {
                        acc[r * cols + k] += g[r * cols + k] * scale[r];
                    }
                }
            }
            Op::SumCols(x) => {
                let src_cols = self.nodes[*x].cols;
                let acc = slot(grads, *x, rows * src_cols);
                for r in 0..rows {
                    acc[r * src_cols..(r + 1) * src_cols].iter_mut().for_each(|a| *a += g[r]);
                }
            }
            Op::Sum(x) => {
                let n = self.nodes[*x].val.as_slice().len();
                slot(grads, *x, n).iter_mut().for_each(|a| *a += g[0]);
            }
            Op::Mean(x) => {
                let n = self.nodes[*x].val.as_slice().len();
                let share = g[0] / R::from_f64(n.max(1) as f64);
                slot(grads, *x, n).iter_mut().for_each(|a| *a += share);
            }
        }
    }
}

fn slot<R: Real>(grads: &mut [Option<Vec<R>>], j: usize, len: usize) -> &mut [R] {
    grads[j].get_or_insert_with(|| vec![R::zero(); len])
}

fn axpy<R: Real>(acc: &mut [R], a: R, x: &[R]) {
    for (d, &s) in acc.iter_mut().zip(x) {
        *d += a * s;
    }
}

#[inline]
pub(crate) fn sigmoid<R: Real>(v: R) -> R {
    if v >= R::zero() {
        R::one() / (R::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (R::one() + e)
    }
}

pub(crate) fn softmax_in_place<R: Real>(row: &mut [R]) {
    let m = row.iter().copied().fold(R::neg_infinity(), R::max);
    let mut total = R::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

pub(crate) fn log_softmax_in_place<R: Real>(row: &mut [R]) {
    let m = row.iter().copied().fold(R::neg_infinity(), R::max);
    let lse = row.iter().map(|&v| (v - m).exp()).sum::<R>().ln() + m;
    row.iter_mut().for_each(|v| *v -= lse);
}
