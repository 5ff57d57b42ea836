//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to the [`Tape`] holding its forward value
//! and the handles of its operands. [`Tape::backward`] walks the nodes in
//! reverse and accumulates exact adjoints.
//!
//! Besides the usual dense-network primitives the tape carries the reductions
//! needed by temporal-logic robustness: hard and log-sum-exp min/max over a
//! list of same-shaped operands, an order-statistic selector and a fused
//! rectangle-union margin.

use std::rc::Rc;

use crate::tensor::{matmul_at_into, matmul_bt_into, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Axis-aligned box used by [`Tape::rect_union_margin`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect2 {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect2 {
    /// Signed margin `min_k` of the distances to the four faces, with the
    /// index of the active face (`0..4`: x-min, x-max, y-min, y-max).
    pub fn margin(&self, x: f64, y: f64) -> (f64, usize) {
        let faces = [
            x - self.min[0],
            self.max[0] - x,
            y - self.min[1],
            self.max[1] - y,
        ];
        let mut best = (faces[0], 0);
        for (k, &f) in faces.iter().enumerate().skip(1) {
            if f < best.0 {
                best = (f, k);
            }
        }
        best
    }
}

/// Margin of the union of `rects` at a point: max over rectangles of the
/// per-rectangle face margin. Ties go to the lowest index.
pub fn rect_union_margin(rects: &[Rect2], x: f64, y: f64) -> f64 {
    rects
        .iter()
        .map(|r| r.margin(x, y).0)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Square(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    SumCols(Var),
    SumAll(Var),
    /// Element-wise selection from one operand per element (hard min, max,
    /// k-th largest); `choice[e]` is the operand index for element `e`.
    Select(Vec<Var>, Vec<u32>),
    SoftMax(Vec<Var>, f64),
    SoftMin(Vec<Var>, f64),
    /// Per row: the active coordinate and its sign (`0` when the margin does
    /// not depend on the point, which cannot happen for non-degenerate boxes).
    Margin(Var, Vec<(u8, f64)>),
    CrossEntropy(Var, Rc<[usize]>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.index()].as_ref()
    }

    /// Gradient of `v`, or `None` when nothing flowed into it.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.index()].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        let id = u32::try_from(self.nodes.len()).expect("tape overflow");
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(id)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.index()].needs_grad
    }

    fn any_needs(&self, vs: &[Var]) -> bool {
        vs.iter().any(|&v| self.needs(v))
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.index()].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.index()].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "element-wise shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x + y);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x - y);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x * y);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    /// `a + 1 * row`, broadcasting a `1 x c` row over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.value(a), self.value(row));
        assert_eq!(tr.rows(), 1, "add_row expects a row vector");
        assert_eq!(ta.cols(), tr.cols(), "add_row column mismatch");
        let mut value = ta.clone();
        let c = ta.cols();
        for r in 0..ta.rows() {
            for (v, b) in value.data_mut()[r * c..(r + 1) * c].iter_mut().zip(tr.data()) {
                *v += b;
            }
        }
        let ng = self.needs(a) || self.needs(row);
        self.push(value, Op::AddRow(a, row), ng)
    }

    /// Scales row `r` of `a` by `col[r]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (ta, tc) = (self.value(a), self.value(col));
        assert_eq!(tc.cols(), 1, "mul_col expects a column vector");
        assert_eq!(ta.rows(), tc.rows(), "mul_col row mismatch");
        let mut value = ta.clone();
        let c = ta.cols();
        for r in 0..ta.rows() {
            let s = tc.data()[r];
            for v in &mut value.data_mut()[r * c..(r + 1) * c] {
                *v *= s;
            }
        }
        let ng = self.needs(a) || self.needs(col);
        self.push(value, Op::MulCol(a, col), ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|v| v * k);
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, k), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|v| v + k);
        let ng = self.needs(a);
        self.push(value, Op::AddScalar(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let ng = self.needs(a);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let ng = self.needs(a);
        self.push(value, Op::Sigmoid(a), ng)
    }

    /// `max(a, 0)` element-wise; the subgradient at 0 is taken as 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        let ng = self.needs(a);
        self.push(value, Op::Relu(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        let ng = self.needs(a);
        self.push(value, Op::Square(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                value.data_mut()[r * cols + off..r * cols + off + t.cols()]
                    .copy_from_slice(t.row_slice(r));
            }
            off += t.cols();
        }
        let ng = self.any_needs(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let ng = self.any_needs(parts);
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.cols(), "slice_cols out of range");
        let mut value = Tensor::zeros(t.rows(), len);
        for r in 0..t.rows() {
            value.data_mut()[r * len..(r + 1) * len]
                .copy_from_slice(&t.row_slice(r)[start..start + len]);
        }
        let ng = self.needs(a);
        self.push(value, Op::SliceCols(a, start), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.rows(), "slice_rows out of range");
        let c = t.cols();
        let value = Tensor::from_vec(len, c, t.data()[start * c..(start + len) * c].to_vec());
        let ng = self.needs(a);
        self.push(value, Op::SliceRows(a, start), ng)
    }

    /// Row sums as an `r x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
        let value = Tensor::from_vec(t.rows(), 1, data);
        let ng = self.needs(a);
        self.push(value, Op::SumCols(a), ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let ng = self.needs(a);
        self.push(value, Op::SumAll(a), ng)
    }

    fn check_list(&self, vs: &[Var]) -> [usize; 2] {
        assert!(!vs.is_empty(), "reduction over an empty list");
        let shape = self.shape(vs[0]);
        for &v in &vs[1..] {
            assert_eq!(self.shape(v), shape, "reduction shape mismatch");
        }
        shape
    }

    fn select_by(&mut self, vs: &[Var], pick: impl Fn(&mut Vec<(f64, usize)>) -> usize) -> Var {
        let [rows, cols] = self.check_list(vs);
        let n = rows * cols;
        let mut out = Vec::with_capacity(n);
        let mut choice = Vec::with_capacity(n);
        let mut scratch = Vec::with_capacity(vs.len());
        for e in 0..n {
            scratch.clear();
            scratch.extend(vs.iter().enumerate().map(|(i, &v)| (self.value(v).data()[e], i)));
            let i = pick(&mut scratch);
            out.push(self.value(vs[i]).data()[e]);
            choice.push(i as u32);
        }
        let ng = self.any_needs(vs);
        self.push(Tensor::from_vec(rows, cols, out), Op::Select(vs.to_vec(), choice), ng)
    }

    /// Element-wise minimum across operands; ties resolve to the first.
    pub fn min_list(&mut self, vs: &[Var]) -> Var {
        if vs.len() == 1 {
            return vs[0];
        }
        self.select_by(vs, |s| {
            let mut best = 0;
            for k in 1..s.len() {
                if s[k].0 < s[best].0 {
                    best = k;
                }
            }
            s[best].1
        })
    }

    /// Element-wise maximum across operands; ties resolve to the first.
    pub fn max_list(&mut self, vs: &[Var]) -> Var {
        if vs.len() == 1 {
            return vs[0];
        }
        self.select_by(vs, |s| {
            let mut best = 0;
            for k in 1..s.len() {
                if s[k].0 > s[best].0 {
                    best = k;
                }
            }
            s[best].1
        })
    }

    /// Element-wise `k`-th largest (1-based) across operands. Equal values are
    /// ordered by ascending operand index.
    pub fn kth_largest(&mut self, vs: &[Var], k: usize) -> Var {
        assert!(k >= 1 && k <= vs.len(), "k-th largest out of range");
        self.select_by(vs, |s| {
            s.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            s[k - 1].1
        })
    }

    /// `(1/tau) log sum exp(tau * v_i)` element-wise.
    pub fn softmax_list(&mut self, vs: &[Var], tau: f64) -> Var {
        if vs.len() == 1 {
            return vs[0];
        }
        let value = self.lse(vs, tau);
        let ng = self.any_needs(vs);
        self.push(value, Op::SoftMax(vs.to_vec(), tau), ng)
    }

    /// `-(1/tau) log sum exp(-tau * v_i)` element-wise.
    pub fn softmin_list(&mut self, vs: &[Var], tau: f64) -> Var {
        if vs.len() == 1 {
            return vs[0];
        }
        let value = self.lse(vs, -tau);
        let ng = self.any_needs(vs);
        self.push(value, Op::SoftMin(vs.to_vec(), tau), ng)
    }

    fn lse(&self, vs: &[Var], tau: f64) -> Tensor {
        let [rows, cols] = self.check_list(vs);
        let n = rows * cols;
        let mut out = Vec::with_capacity(n);
        for e in 0..n {
            let vals = vs.iter().map(|&v| self.value(v).data()[e]);
            out.push(log_sum_exp(vals, tau));
        }
        Tensor::from_vec(rows, cols, out)
    }

    /// Margin of a union of boxes for every row of an `r x 2` point matrix:
    /// positive strictly inside, zero on the boundary, negative outside.
    pub fn rect_union_margin(&mut self, points: Var, rects: &[Rect2]) -> Var {
        assert!(!rects.is_empty(), "empty region");
        let t = self.value(points);
        assert_eq!(t.cols(), 2, "points must be r x 2");
        let mut out = Vec::with_capacity(t.rows());
        let mut active = Vec::with_capacity(t.rows());
        for r in 0..t.rows() {
            let (x, y) = (t.get(r, 0), t.get(r, 1));
            let mut best = (f64::NEG_INFINITY, 0usize);
            for rect in rects {
                let (m, face) = rect.margin(x, y);
                if m > best.0 {
                    best = (m, face);
                }
            }
            out.push(best.0);
            let (coord, sign) = match best.1 {
                0 => (0, 1.0),
                1 => (0, -1.0),
                2 => (1, 1.0),
                _ => (1, -1.0),
            };
            active.push((coord, sign));
        }
        let value = Tensor::from_vec(t.rows(), 1, out);
        let ng = self.needs(points);
        self.push(value, Op::Margin(points, active), ng)
    }

    /// Mean softmax cross-entropy of `r x k` logits against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let t = self.value(logits);
        assert_eq!(t.rows(), labels.len(), "one label per row");
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = t.row_slice(r);
            total += log_sum_exp(row.iter().copied(), 1.0) - row[y];
        }
        let value = Tensor::scalar(total / labels.len() as f64);
        let ng = self.needs(logits);
        self.push(value, Op::CrossEntropy(logits, labels.into()), ng)
    }

    /// Adjoints of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; root.index() + 1];
        grads[root.index()] = Some(Tensor::scalar(1.0));
        for idx in (0..=root.index()).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
        if !self.needs(v) {
            return None;
        }
        let slot = &mut grads[v.index()];
        if slot.is_none() {
            let [r, c] = self.shape(v);
            *slot = Some(Tensor::zeros(r, c));
        }
        slot.as_mut()
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    matmul_bt_into(g, tb, ga);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    matmul_at_into(ta, g, gb);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (o, d) in gb.data_mut().iter_mut().zip(g.data()) {
                        *o -= d;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, d), y) in ga.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                        *o += d * y;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((o, d), x) in gb.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *o += d * x;
                    }
                }
            }
            Op::AddRow(a, row) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gr) = self.acc(grads, *row) {
                    let c = g.cols();
                    for r in 0..g.rows() {
                        for (o, d) in gr.data_mut().iter_mut().zip(&g.data()[r * c..(r + 1) * c]) {
                            *o += d;
                        }
                    }
                }
            }
            Op::MulCol(a, col) => {
                let (ta, tc) = (self.value(*a), self.value(*col));
                let c = g.cols();
                if let Some(ga) = self.acc(grads, *a) {
                    for r in 0..g.rows() {
                        let s = tc.data()[r];
                        for (o, d) in ga.data_mut()[r * c..(r + 1) * c]
                            .iter_mut()
                            .zip(&g.data()[r * c..(r + 1) * c])
                        {
                            *o += d * s;
                        }
                    }
                }
                if let Some(gc) = self.acc(grads, *col) {
                    for r in 0..g.rows() {
                        let dot: f64 = g.data()[r * c..(r + 1) * c]
                            .iter()
                            .zip(ta.row_slice(r))
                            .map(|(d, x)| d * x)
                            .sum();
                        gc.data_mut()[r] += dot;
                    }
                }
            }
            Op::Scale(a, k) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, d) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += d * k;
                    }
                }
            }
            Op::AddScalar(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
            }
            Op::Tanh(a) => {
                let y = &node.value;
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, d), y) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += d * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, d), y) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += d * y * (1.0 - y);
                    }
                }
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, d), x) in ga.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        if *x > 0.0 {
                            *o += d;
                        }
                    }
                }
            }
            Op::Square(a) => {
                let x = self.value(*a);
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, d), x) in ga.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        *o += 2.0 * d * x;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let cols = g.cols();
                let mut off = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if let Some(gp) = self.acc(grads, p) {
                        for r in 0..g.rows() {
                            for (o, d) in gp.data_mut()[r * pc..(r + 1) * pc]
                                .iter_mut()
                                .zip(&g.data()[r * cols + off..r * cols + off + pc])
                            {
                                *o += d;
                            }
                        }
                    }
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if let Some(gp) = self.acc(grads, p) {
                        for (o, d) in gp.data_mut().iter_mut().zip(&g.data()[off..off + n]) {
                            *o += d;
                        }
                    }
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                let ac = self.value(*a).cols();
                let len = g.cols();
                if let Some(ga) = self.acc(grads, *a) {
                    for r in 0..g.rows() {
                        for (o, d) in ga.data_mut()[r * ac + start..r * ac + start + len]
                            .iter_mut()
                            .zip(&g.data()[r * len..(r + 1) * len])
                        {
                            *o += d;
                        }
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let c = g.cols();
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, d) in ga.data_mut()[start * c..start * c + g.len()]
                        .iter_mut()
                        .zip(g.data())
                    {
                        *o += d;
                    }
                }
            }
            Op::SumCols(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    let c = ga.cols();
                    for r in 0..g.rows() {
                        let d = g.data()[r];
                        for o in &mut ga.data_mut()[r * c..(r + 1) * c] {
                            *o += d;
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                let d = g.item();
                if let Some(ga) = self.acc(grads, *a) {
                    for o in ga.data_mut() {
                        *o += d;
                    }
                }
            }
            Op::Select(vs, choice) => {
                for (e, &i) in choice.iter().enumerate() {
                    if let Some(gv) = self.acc(grads, vs[i as usize]) {
                        gv.data_mut()[e] += g.data()[e];
                    }
                }
            }
            Op::SoftMax(vs, tau) | Op::SoftMin(vs, tau) => {
                let sign = if matches!(node.op, Op::SoftMax(..)) { 1.0 } else { -1.0 };
                let out = &node.value;
                for &v in vs {
                    let x = self.value(v);
                    if let Some(gv) = self.acc(grads, v) {
                        for e in 0..g.len() {
                            let w = (sign * tau * (x.data()[e] - out.data()[e])).exp();
                            gv.data_mut()[e] += g.data()[e] * w;
                        }
                    }
                }
            }
            Op::Margin(points, active) => {
                if let Some(gp) = self.acc(grads, *points) {
                    for (r, &(coord, sign)) in active.iter().enumerate() {
                        gp.data_mut()[r * 2 + coord as usize] += sign * g.data()[r];
                    }
                }
            }
            Op::CrossEntropy(logits, labels) => {
                let t = self.value(*logits);
                let scale = g.item() / labels.len() as f64;
                if let Some(gl) = self.acc(grads, *logits) {
                    let k = t.cols();
                    for (r, &y) in labels.iter().enumerate() {
                        let row = t.row_slice(r);
                        let lse = log_sum_exp(row.iter().copied(), 1.0);
                        for c in 0..k {
                            let p = (row[c] - lse).exp();
                            let target = if c == y { 1.0 } else { 0.0 };
                            gl.data_mut()[r * k + c] += scale * (p - target);
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(1/tau) log sum exp(tau * v_i)`; with negative `tau` this is the smooth
/// minimum. Stable for large magnitudes.
pub fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone, tau: f64) -> f64 {
    let m = vals
        .clone()
        .map(|v| tau * v)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = vals.map(|v| (tau * v - m).exp()).sum();
    (m + s.ln()) / tau
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_at_zero_has_unit_slope() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.tanh(x);
        assert_eq!(tape.value(y).item(), 0.0);
        let g = tape.backward(y);
        assert_eq!(g.get(x).unwrap().item(), 1.0);
    }

    #[test]
    fn identity_matmul_passes_vector_through() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::identity(3));
        let v = tape.leaf(Tensor::column(&[1.0, -2.0, 0.5]));
        let y = tape.matmul(i, v);
        assert_eq!(tape.value(y), tape.value(v));
    }

    #[test]
    fn softmax_of_two_values_is_within_lse_bound() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(1.0));
        let b = tape.leaf(Tensor::scalar(0.0));
        let s = tape.softmax_list(&[a, b], 10.0);
        let v = tape.value(s).item();
        assert!(v >= 1.0 && v <= 1.0 + 2f64.ln() / 10.0);
        let m = tape.softmin_list(&[a, b], 10.0);
        let v = tape.value(m).item();
        assert!(v <= 0.0 && v >= -2f64.ln() / 10.0);
    }

    #[test]
    fn kth_largest_breaks_ties_by_index() {
        let mut tape = Tape::new();
        let xs: Vec<Var> = [3.0, 1.0, -2.0, 1.0]
            .iter()
            .map(|&v| tape.leaf(Tensor::scalar(v)))
            .collect();
        let second = tape.kth_largest(&xs, 2);
        assert_eq!(tape.value(second).item(), 1.0);
        let g = tape.backward(second);
        assert_eq!(g.get(xs[1]).unwrap().item(), 1.0);
        assert!(g.get(xs[3]).is_none());
    }

    #[test]
    fn unit_box_margin_is_one_minus_inf_norm() {
        let rect = Rect2 {
            min: [-1.0, -1.0],
            max: [1.0, 1.0],
        };
        let m = rect_union_margin(&[rect], 0.3, -0.1);
        assert!((m - 0.7).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_of_zero_logits_is_log_two() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros(5, 2));
        let loss = tape.cross_entropy(logits, &[0, 1, 1, 0, 1]);
        assert!((tape.value(loss).item() - 2f64.ln()).abs() < 1e-12);
    }
}
