//! Recorded-tape reverse-mode automatic differentiation over dense 2-D
//! f64 matrices.
//!
//! Every operation eagerly computes its value and appends one node to the
//! tape; nodes are therefore stored in topological order and a single
//! reverse sweep propagates adjoints. A [`Tensor`] is a cheap handle
//! (tape + node id); values are immutable after creation and backward only
//! mutates gradient accumulators.
//!
//! A tape and its tensors belong to one worker. Independent tapes may run
//! concurrently; this type is deliberately not `Send`/`Sync`.

use std::cell::RefCell;
use std::rc::Rc;

use super::{Matrix, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Collapse the row dimension: m to 1 rows.
    Rows,
    /// Collapse the column dimension: n to 1 columns.
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EwiseKind {
    Add,
    Mul,
    /// Elementwise maximum. Ties route the gradient to the left operand.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnaryKind {
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
    Ln,
    Exp,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize },
    Ewise { a: usize, b: usize, kind: EwiseKind },
    Scale { a: usize, factor: f64 },
    DivScalar { a: usize, divisor: f64 },
    Unary { a: usize, kind: UnaryKind },
    SoftmaxRows { a: usize },
    LogSoftmaxRows { a: usize },
    Reduce { a: usize, axis: Axis, kind: ReduceKind },
    Transpose { a: usize },
    ConcatCols { parts: Vec<usize> },
    ConcatRows { parts: Vec<usize> },
    SliceCols { a: usize, start: usize },
    SliceRows { a: usize, start: usize },
    GatherRows { a: usize, indices: Vec<usize> },
    SumAll { a: usize },
}

struct Node {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    op: Op,
    /// Adjoint accumulator; same shape as data once materialized.
    grad: Option<Vec<f64>>,
}

struct TapeInner {
    nodes: Vec<Node>,
}

/// Shared handle to a recording of primitive operations.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to one recorded value on a tape.
#[derive(Clone)]
pub struct Tensor {
    tape: Tape,
    id: usize,
    rows: usize,
    cols: usize,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}


impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner { nodes: Vec::new() })),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    fn push(&self, rows: usize, cols: usize, data: Vec<f64>, op: Op) -> Tensor {
        debug_assert_eq!(data.len(), rows * cols);
        let id = {
            let mut inner = self.inner.borrow_mut();
            inner.nodes.push(Node {
                rows,
                cols,
                data,
                op,
                grad: None,
            });
            inner.nodes.len() - 1
        };
        Tensor {
            tape: self.clone(),
            id,
            rows,
            cols,
        }
    }

    /// Record an input value as a differentiable leaf.
    pub fn leaf(&self, m: &Matrix) -> Tensor {
        self.push(m.rows(), m.cols(), m.data().to_vec(), Op::Leaf)
    }

    pub fn leaf_from_vec(
        &self,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    ) -> Result<Tensor, TensorError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(TensorError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(self.push(rows, cols, data, Op::Leaf))
    }

    /// All-ones constant, used to express row/column broadcasts as matmuls.
    pub fn ones(&self, rows: usize, cols: usize) -> Tensor {
        self.push(rows, cols, vec![1.0; rows * cols], Op::Leaf)
    }

    /// Runs the reverse sweep from a scalar output, visiting every recorded
    /// operation at most once in reverse topological order. Gradients
    /// accumulate into each node's adjoint buffer and are read back through
    /// [`Tensor::grad`].
    pub fn backward(&self, output: &Tensor) -> Result<(), TensorError> {
        if !self.same_tape(&output.tape) {
            return Err(TensorError::TapeMismatch { op: "backward" });
        }
        if output.rows != 1 || output.cols != 1 {
            return Err(TensorError::NotScalar {
                op: "backward",
                rows: output.rows,
                cols: output.cols,
            });
        }
        let mut inner = self.inner.borrow_mut();
        let n = inner.nodes.len();
        // Local adjoints for this sweep; merged into node accumulators at the end.
        let mut adj: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        adj[output.id] = Some(vec![1.0]);

        for id in (0..=output.id).rev() {
            let g = match adj[id].take() {
                Some(g) => g,
                None => continue,
            };
            // Split borrow: the op of `id` reads sibling node values.
            let op = inner.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (m, k) = (inner.nodes[a].rows, inner.nodes[a].cols);
                    let nn = inner.nodes[b].cols;
                    // a.grad += g . b^T
                    {
                        let bval = &inner.nodes[b].data;
                        let ga = adj[a].get_or_insert_with(|| vec![0.0; m * k]);
                        for i in 0..m {
                            for j in 0..nn {
                                let gij = g[i * nn + j];
                                if gij != 0.0 {
                                    for p in 0..k {
                                        ga[i * k + p] += gij * bval[p * nn + j];
                                    }
                                }
                            }
                        }
                    }
                    // b.grad += a^T . g
                    {
                        let aval = &inner.nodes[a].data;
                        let gb = adj[b].get_or_insert_with(|| vec![0.0; k * nn]);
                        for i in 0..m {
                            for p in 0..k {
                                let aip = aval[i * k + p];
                                if aip != 0.0 {
                                    for j in 0..nn {
                                        gb[p * nn + j] += aip * g[i * nn + j];
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Ewise { a, b, kind } => match kind {
                    EwiseKind::Add => {
                        accumulate(&mut adj, a, &g, inner.nodes[a].data.len());
                        accumulate(&mut adj, b, &g, inner.nodes[b].data.len());
                    }
                    EwiseKind::Mul => {
                        {
                            let bval = inner.nodes[b].data.clone();
                            let ga = adj[a].get_or_insert_with(|| vec![0.0; bval.len()]);
                            for (i, gi) in g.iter().enumerate() {
                                ga[i] += gi * bval[i];
                            }
                        }
                        {
                            let aval = &inner.nodes[a].data;
                            let gb = adj[b].get_or_insert_with(|| vec![0.0; aval.len()]);
                            for (i, gi) in g.iter().enumerate() {
                                gb[i] += gi * aval[i];
                            }
                        }
                    }
                    EwiseKind::Max => {
                        // Ties go to the left operand, keeping backward deterministic.
                        let awins: Vec<bool> = inner.nodes[a]
                            .data
                            .iter()
                            .zip(&inner.nodes[b].data)
                            .map(|(x, y)| x >= y)
                            .collect();
                        {
                            let ga = adj[a].get_or_insert_with(|| vec![0.0; awins.len()]);
                            for (i, gi) in g.iter().enumerate() {
                                if awins[i] {
                                    ga[i] += gi;
                                }
                            }
                        }
                        {
                            let gb = adj[b].get_or_insert_with(|| vec![0.0; awins.len()]);
                            for (i, gi) in g.iter().enumerate() {
                                if !awins[i] {
                                    gb[i] += gi;
                                }
                            }
                        }
                    }
                },
                Op::Scale { a, factor } => {
                    let ga = adj[a].get_or_insert_with(|| vec![0.0; g.len()]);
                    for (i, gi) in g.iter().enumerate() {
                        ga[i] += gi * factor;
                    }
                }
                Op::DivScalar { a, divisor } => {
                    let ga = adj[a].get_or_insert_with(|| vec![0.0; g.len()]);
                    for (i, gi) in g.iter().enumerate() {
                        ga[i] += gi / divisor;
                    }
                }
                Op::Unary { a, kind } => {
                    let x = inner.nodes[a].data.clone();
                    let y = &inner.nodes[id].data;
                    let ga = adj[a].get_or_insert_with(|| vec![0.0; x.len()]);
                    match kind {
                        UnaryKind::Relu => {
                            for (i, gi) in g.iter().enumerate() {
                                if x[i] > 0.0 {
                                    ga[i] += gi;
                                }
                            }
                        }
                        UnaryKind::Tanh => {
                            for (i, gi) in g.iter().enumerate() {
                                ga[i] += gi * (1.0 - y[i] * y[i]);
                            }
                        }
                        UnaryKind::Sigmoid => {
                            for (i, gi) in g.iter().enumerate() {
                                ga[i] += gi * y[i] * (1.0 - y[i]);
                            }
                        }
                        UnaryKind::Softplus => {
                            for (i, gi) in g.iter().enumerate() {
                                ga[i] += gi * sigmoid(x[i]);
                            }
                        }
                        UnaryKind::Ln => {
                            for (i, gi) in g.iter().enumerate() {
                                ga[i] += gi / x[i];
                            }
                        }
                        UnaryKind::Exp => {
                            for (i, gi) in g.iter().enumerate() {
                                ga[i] += gi * y[i];
                            }
                        }
                    }
                }
                Op::SoftmaxRows { a } => {
                    // ds = y * (g - <g, y>) per row
                    let rows = inner.nodes[id].rows;
                    let cols = inner.nodes[id].cols;
                    let y = inner.nodes[id].data.clone();
                    let ga = adj[a].get_or_insert_with(|| vec![0.0; rows * cols]);
                    for r in 0..rows {
                        let base = r * cols;
                        let dot: f64 = (0..cols).map(|c| g[base + c] * y[base + c]).sum();
                        for c in 0..cols {
                            ga[base + c] += y[base + c] * (g[base + c] - dot);
                        }
                    }
                }
                Op::LogSoftmaxRows { a } => {
                    // dx = g - softmax(x) * sum(g) per row; softmax = exp(output)
                    let rows = inner.nodes[id].rows;
                    let cols = inner.nodes[id].cols;
                    let y = inner.nodes[id].data.clone();
                    let ga = adj[a].get_or_insert_with(|| vec![0.0; rows * cols]);
                    for r in 0..rows {
                        let base = r * cols;
                        let gsum: f64 = (0..cols).map(|c| g[base + c]).sum();
                        for c in 0..cols {
                            ga[base + c] += g[base + c] - y[base + c].exp() * gsum;
                        }
                    }
                }
                Op::Reduce { a, axis, kind } => {
                    let rows = inner.nodes[a].rows;
                    let cols = inner.nodes[a].cols;
                    let x = inner.nodes[a].data.clone();
                    let ga = adj[a].get_or_insert_with(|| vec![0.0; rows * cols]);
                    match (axis, kind) {
                        (Axis::Rows, ReduceKind::Max) => {
                            for c in 0..cols {
                                let arg = argmax_stride(&x, c, rows, cols);
                                ga[arg * cols + c] += g[c];
                            }
                        }
                        (Axis::Rows, ReduceKind::Mean) => {
                            for c in 0..cols {
                                for r in 0..rows {
                                    ga[r * cols + c] += g[c] / rows as f64;
                                }
                            }
                        }
                        (Axis::Cols, ReduceKind::Max) => {
                            for r in 0..rows {
                                let arg = argmax_slice(&x[r * cols..(r + 1) * cols]);
                                ga[r * cols + arg] += g[r];
                            }
                        }
                        (Axis::Cols, ReduceKind::Mean) => {
                            for r in 0..rows {
                                for c in 0..cols {
                                    ga[r * cols + c] += g[r] / cols as f64;
                                }
                            }
                        }
                    }
                }
                Op::Transpose { a } => {
                    let rows = inner.nodes[id].rows; // = a.cols
                    let cols = inner.nodes[id].cols; // = a.rows
                    let ga = adj[a].get_or_insert_with(|| vec![0.0; rows * cols]);
                    for r in 0..rows {
                        for c in 0..cols {
                            ga[c * rows + r] += g[r * cols + c];
                        }
                    }
                }
                Op::ConcatCols { parts } => {
                    let rows = inner.nodes[id].rows;
                    let total = inner.nodes[id].cols;
                    let mut offset = 0;
                    for &p in &parts {
                        let pc = inner.nodes[p].cols;
                        let gp = adj[p].get_or_insert_with(|| vec![0.0; rows * pc]);
                        for r in 0..rows {
                            for c in 0..pc {
                                gp[r * pc + c] += g[r * total + offset + c];
                            }
                        }
                        offset += pc;
                    }
                }
                Op::ConcatRows { parts } => {
                    let cols = inner.nodes[id].cols;
                    let mut offset = 0;
                    for &p in &parts {
                        let pr = inner.nodes[p].rows;
                        let gp = adj[p].get_or_insert_with(|| vec![0.0; pr * cols]);
                        for i in 0..pr * cols {
                            gp[i] += g[offset * cols + i];
                        }
                        offset += pr;
                    }
                }
                Op::SliceCols { a, start } => {
                    let rows = inner.nodes[id].rows;
                    let len = inner.nodes[id].cols;
                    let acols = inner.nodes[a].cols;
                    let ga = adj[a].get_or_insert_with(|| vec![0.0; rows * acols]);
                    for r in 0..rows {
                        for c in 0..len {
                            ga[r * acols + start + c] += g[r * len + c];
                        }
                    }
                }
                Op::SliceRows { a, start } => {
                    let cols = inner.nodes[id].cols;
                    let len = inner.nodes[id].rows;
                    let arows = inner.nodes[a].rows;
                    let ga = adj[a].get_or_insert_with(|| vec![0.0; arows * cols]);
                    for i in 0..len * cols {
                        ga[start * cols + i] += g[i];
                    }
                }
                Op::GatherRows { a, indices } => {
                    let cols = inner.nodes[id].cols;
                    let arows = inner.nodes[a].rows;
                    let ga = adj[a].get_or_insert_with(|| vec![0.0; arows * cols]);
                    // Scatter-add; repeated indices accumulate.
                    for (out_r, &src_r) in indices.iter().enumerate() {
                        for c in 0..cols {
                            ga[src_r * cols + c] += g[out_r * cols + c];
                        }
                    }
                }
                Op::SumAll { a } => {
                    let len = inner.nodes[a].data.len();
                    let ga = adj[a].get_or_insert_with(|| vec![0.0; len]);
                    for gi in ga.iter_mut() {
                        *gi += g[0];
                    }
                }
            }
            // Restore the adjoint taken for processing so it reaches the
            // node's accumulator below.
            adj[id] = Some(g);
        }

        for (id, local) in adj.into_iter().enumerate() {
            if let Some(local) = local {
                let node = &mut inner.nodes[id];
                match &mut node.grad {
                    Some(acc) => {
                        for (a, l) in acc.iter_mut().zip(&local) {
                            *a += l;
                        }
                    }
                    None => node.grad = Some(local),
                }
            }
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: usize, g: &[f64], len: usize) {
    let ga = adj[id].get_or_insert_with(|| vec![0.0; len]);
    for (a, gi) in ga.iter_mut().zip(g) {
        *a += gi;
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

/// First index of the maximum, scanning up: ties resolve to the lowest index.
fn argmax_slice(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

fn argmax_stride(xs: &[f64], col: usize, rows: usize, cols: usize) -> usize {
    let mut best = 0;
    for r in 1..rows {
        if xs[r * cols + col] > xs[best * cols + col] {
            best = r;
        }
    }
    best
}

impl Tensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    /// Snapshot of the recorded value.
    pub fn value(&self) -> Matrix {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        Matrix::from_vec(node.rows, node.cols, node.data.clone()).expect("node shape is valid")
    }

    pub fn value_at(&self, r: usize, c: usize) -> f64 {
        let inner = self.tape.inner.borrow();
        inner.nodes[self.id].data[r * self.cols + c]
    }

    /// Value of a 1x1 tensor.
    pub fn scalar(&self) -> Result<f64, TensorError> {
        if self.rows != 1 || self.cols != 1 {
            return Err(TensorError::NotScalar {
                op: "scalar",
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.value_at(0, 0))
    }

    /// Accumulated gradient; zeros if backward has not reached this node.
    pub fn grad(&self) -> Matrix {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        match &node.grad {
            Some(g) => Matrix::from_vec(node.rows, node.cols, g.clone()).expect("grad shape"),
            None => Matrix::zeros(node.rows, node.cols),
        }
    }

    pub fn is_finite(&self) -> bool {
        let inner = self.tape.inner.borrow();
        inner.nodes[self.id].data.iter().all(|v| v.is_finite())
    }

    fn binary_guard(&self, other: &Tensor, op: &'static str) -> Result<(), TensorError> {
        if !self.tape.same_tape(&other.tape) {
            return Err(TensorError::TapeMismatch { op });
        }
        Ok(())
    }

    fn shape_guard(&self, other: &Tensor, op: &'static str) -> Result<(), TensorError> {
        self.binary_guard(other, op)?;
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    /// Matrix product. Backward: a.grad += g.b^T, b.grad += a^T.g.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.binary_guard(other, "matmul")?;
        if self.cols != other.rows {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let inner = self.tape.inner.borrow();
        let a = &inner.nodes[self.id].data;
        let b = &inner.nodes[other.id].data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = a[i * k + p];
                if aip != 0.0 {
                    let brow = &b[p * n..(p + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for (o, bv) in orow.iter_mut().zip(brow) {
                        *o += aip * bv;
                    }
                }
            }
        }
        drop(inner);
        Ok(self.tape.push(
            m,
            n,
            out,
            Op::MatMul {
                a: self.id,
                b: other.id,
            },
        ))
    }

    pub fn ewise(&self, other: &Tensor, kind: EwiseKind) -> Result<Tensor, TensorError> {
        let name = match kind {
            EwiseKind::Add => "ewise_add",
            EwiseKind::Mul => "ewise_mul",
            EwiseKind::Max => "ewise_max",
        };
        self.shape_guard(other, name)?;
        let inner = self.tape.inner.borrow();
        let a = &inner.nodes[self.id].data;
        let b = &inner.nodes[other.id].data;
        let out: Vec<f64> = match kind {
            EwiseKind::Add => a.iter().zip(b).map(|(x, y)| x + y).collect(),
            EwiseKind::Mul => a.iter().zip(b).map(|(x, y)| x * y).collect(),
            EwiseKind::Max => a.iter().zip(b).map(|(x, y)| x.max(*y)).collect(),
        };
        drop(inner);
        Ok(self.tape.push(
            self.rows,
            self.cols,
            out,
            Op::Ewise {
                a: self.id,
                b: other.id,
                kind,
            },
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.ewise(other, EwiseKind::Add)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.ewise(other, EwiseKind::Mul)
    }

    pub fn max_ewise(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.ewise(other, EwiseKind::Max)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.add(&other.scale(-1.0))
    }

    /// Multiply every element by a constant.
    pub fn scale(&self, factor: f64) -> Tensor {
        let out: Vec<f64> = {
            let inner = self.tape.inner.borrow();
            inner.nodes[self.id].data.iter().map(|v| v * factor).collect()
        };
        self.tape.push(
            self.rows,
            self.cols,
            out,
            Op::Scale {
                a: self.id,
                factor,
            },
        )
    }

    /// Divide every element by a constant. Kept distinct from `scale` so
    /// integer-count normalizations stay exact (x/n, not x*(1/n)).
    pub fn div_scalar(&self, divisor: f64) -> Tensor {
        let out: Vec<f64> = {
            let inner = self.tape.inner.borrow();
            inner.nodes[self.id]
                .data
                .iter()
                .map(|v| v / divisor)
                .collect()
        };
        self.tape.push(
            self.rows,
            self.cols,
            out,
            Op::DivScalar {
                a: self.id,
                divisor,
            },
        )
    }

    fn unary(&self, kind: UnaryKind) -> Tensor {
        let out: Vec<f64> = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].data;
            match kind {
                UnaryKind::Relu => x.iter().map(|v| v.max(0.0)).collect(),
                UnaryKind::Tanh => x.iter().map(|v| v.tanh()).collect(),
                UnaryKind::Sigmoid => x.iter().map(|v| sigmoid(*v)).collect(),
                // max(x,0) + ln(1 + e^-|x|): stable for large |x|
                UnaryKind::Softplus => x
                    .iter()
                    .map(|v| v.max(0.0) + (-v.abs()).exp().ln_1p())
                    .collect(),
                UnaryKind::Ln => x.iter().map(|v| v.ln()).collect(),
                UnaryKind::Exp => x.iter().map(|v| v.exp()).collect(),
            }
        };
        self.tape
            .push(self.rows, self.cols, out, Op::Unary { a: self.id, kind })
    }

    pub fn relu(&self) -> Tensor {
        self.unary(UnaryKind::Relu)
    }

    pub fn tanh(&self) -> Tensor {
        self.unary(UnaryKind::Tanh)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(UnaryKind::Sigmoid)
    }

    pub fn softplus(&self) -> Tensor {
        self.unary(UnaryKind::Softplus)
    }

    pub fn ln(&self) -> Tensor {
        self.unary(UnaryKind::Ln)
    }

    pub fn exp(&self) -> Tensor {
        self.unary(UnaryKind::Exp)
    }

    /// Row-wise softmax with per-row max subtraction. All-equal rows come out
    /// uniform, never NaN.
    pub fn softmax_rows(&self) -> Tensor {
        let out = {
            let inner = self.tape.inner.borrow();
            softmax_rows_data(&inner.nodes[self.id].data, self.rows, self.cols)
        };
        self.tape
            .push(self.rows, self.cols, out, Op::SoftmaxRows { a: self.id })
    }

    /// Row-wise log-softmax: x - max - ln(sum exp(x - max)).
    pub fn log_softmax_rows(&self) -> Tensor {
        let out = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].data;
            let mut out = vec![0.0; x.len()];
            for r in 0..self.rows {
                let row = &x[r * self.cols..(r + 1) * self.cols];
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
                for (c, v) in row.iter().enumerate() {
                    out[r * self.cols + c] = v - mx - lse;
                }
            }
            out
        };
        self.tape
            .push(self.rows, self.cols, out, Op::LogSoftmaxRows { a: self.id })
    }

    /// Collapse one axis to length 1. Max backward routes the gradient to the
    /// lowest-index maximal element of each reduced slice.
    pub fn reduce(&self, axis: Axis, kind: ReduceKind) -> Result<Tensor, TensorError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(TensorError::EmptyTensor {
                op: "reduce",
                rows: self.rows,
                cols: self.cols,
            });
        }
        let inner = self.tape.inner.borrow();
        let x = &inner.nodes[self.id].data;
        let (out, orows, ocols) = match axis {
            Axis::Rows => {
                let mut out = vec![0.0; self.cols];
                for c in 0..self.cols {
                    match kind {
                        ReduceKind::Max => {
                            let mut best = x[c];
                            for r in 1..self.rows {
                                let v = x[r * self.cols + c];
                                if v > best {
                                    best = v;
                                }
                            }
                            out[c] = best;
                        }
                        ReduceKind::Mean => {
                            let mut s = 0.0;
                            for r in 0..self.rows {
                                s += x[r * self.cols + c];
                            }
                            out[c] = s / self.rows as f64;
                        }
                    }
                }
                (out, 1, self.cols)
            }
            Axis::Cols => {
                let mut out = vec![0.0; self.rows];
                for r in 0..self.rows {
                    let row = &x[r * self.cols..(r + 1) * self.cols];
                    out[r] = match kind {
                        ReduceKind::Max => row.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                        ReduceKind::Mean => row.iter().sum::<f64>() / self.cols as f64,
                    };
                }
                (out, self.rows, 1)
            }
        };
        drop(inner);
        Ok(self.tape.push(
            orows,
            ocols,
            out,
            Op::Reduce {
                a: self.id,
                axis,
                kind,
            },
        ))
    }

    pub fn transpose(&self) -> Tensor {
        let out = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].data;
            let mut out = vec![0.0; x.len()];
            for r in 0..self.rows {
                for c in 0..self.cols {
                    out[c * self.rows + r] = x[r * self.cols + c];
                }
            }
            out
        };
        self.tape
            .push(self.cols, self.rows, out, Op::Transpose { a: self.id })
    }

    /// Column-wise concatenation; parts must share a row count.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyTensor {
                op: "concat_cols",
                rows: 0,
                cols: 0,
            });
        }
        let first = parts[0];
        let rows = first.rows;
        let mut total = 0;
        for p in parts {
            first.binary_guard(p, "concat_cols")?;
            if p.rows != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: first.shape(),
                    rhs: p.shape(),
                });
            }
            total += p.cols;
        }
        let out = {
            let inner = first.tape.inner.borrow();
            let mut out = vec![0.0; rows * total];
            let mut offset = 0;
            for p in parts {
                let data = &inner.nodes[p.id].data;
                for r in 0..rows {
                    out[r * total + offset..r * total + offset + p.cols]
                        .copy_from_slice(&data[r * p.cols..(r + 1) * p.cols]);
                }
                offset += p.cols;
            }
            out
        };
        Ok(first.tape.push(
            rows,
            total,
            out,
            Op::ConcatCols {
                parts: parts.iter().map(|p| p.id).collect(),
            },
        ))
    }

    /// Row-wise concatenation; parts must share a column count.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyTensor {
                op: "concat_rows",
                rows: 0,
                cols: 0,
            });
        }
        let first = parts[0];
        let cols = first.cols;
        let mut total = 0;
        for p in parts {
            first.binary_guard(p, "concat_rows")?;
            if p.cols != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: first.shape(),
                    rhs: p.shape(),
                });
            }
            total += p.rows;
        }
        let out = {
            let inner = first.tape.inner.borrow();
            let mut out = Vec::with_capacity(total * cols);
            for p in parts {
                out.extend_from_slice(&inner.nodes[p.id].data);
            }
            out
        };
        Ok(first.tape.push(
            total,
            cols,
            out,
            Op::ConcatRows {
                parts: parts.iter().map(|p| p.id).collect(),
            },
        ))
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Tensor, TensorError> {
        if len == 0 || start + len > self.cols {
            return Err(TensorError::SliceOutOfRange {
                op: "slice_cols",
                start,
                len,
                extent: self.cols,
            });
        }
        let out = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].data;
            let mut out = Vec::with_capacity(self.rows * len);
            for r in 0..self.rows {
                out.extend_from_slice(&x[r * self.cols + start..r * self.cols + start + len]);
            }
            out
        };
        Ok(self.tape.push(
            self.rows,
            len,
            out,
            Op::SliceCols {
                a: self.id,
                start,
            },
        ))
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor, TensorError> {
        if len == 0 || start + len > self.rows {
            return Err(TensorError::SliceOutOfRange {
                op: "slice_rows",
                start,
                len,
                extent: self.rows,
            });
        }
        let out = {
            let inner = self.tape.inner.borrow();
            inner.nodes[self.id].data[start * self.cols..(start + len) * self.cols].to_vec()
        };
        Ok(self.tape.push(
            len,
            self.cols,
            out,
            Op::SliceRows {
                a: self.id,
                start,
            },
        ))
    }

    /// Select rows by index (an embedding lookup when `self` is a table).
    /// Backward scatter-adds, so repeated indices accumulate.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor, TensorError> {
        if indices.is_empty() {
            return Err(TensorError::EmptyTensor {
                op: "gather_rows",
                rows: 0,
                cols: self.cols,
            });
        }
        for &i in indices {
            if i >= self.rows {
                return Err(TensorError::SliceOutOfRange {
                    op: "gather_rows",
                    start: i,
                    len: 1,
                    extent: self.rows,
                });
            }
        }
        let out = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].data;
            let mut out = Vec::with_capacity(indices.len() * self.cols);
            for &i in indices {
                out.extend_from_slice(&x[i * self.cols..(i + 1) * self.cols]);
            }
            out
        };
        Ok(self.tape.push(
            indices.len(),
            self.cols,
            out,
            Op::GatherRows {
                a: self.id,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Sum of all elements, as a 1x1 tensor.
    pub fn sum_all(&self) -> Tensor {
        let s: f64 = {
            let inner = self.tape.inner.borrow();
            inner.nodes[self.id].data.iter().sum()
        };
        self.tape.push(1, 1, vec![s], Op::SumAll { a: self.id })
    }
}

pub(crate) fn softmax_rows_data(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (c, v) in row.iter().enumerate() {
            let e = (v - mx).exp();
            out[r * cols + c] = e;
            sum += e;
        }
        for c in 0..cols {
            out[r * cols + c] /= sum;
        }
    }
    out
}
