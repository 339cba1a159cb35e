//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] walks the record in reverse and returns [`Gradients`]
//! for every node. Parameters enter the tape through [`Tape::param`] so their
//! gradients can be collected by [`ParamId`] afterwards.
//!
//! Graph message passing is expressed with a handful of fused edge
//! operations ([`Var::edge_dot`], [`Var::segment_softmax`],
//! [`Var::edge_aggregate`]) that never materialise `E x d` intermediates.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::params::{ParamId, ParamStore};
use crate::special::{sigmoid, softplus, std_normal_cdf, std_normal_pdf};
use crate::tensor::{matmul_nt_acc, matmul_tn_acc, Tensor};

/// Directed edge list shared by the fused edge operations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeList {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

impl EdgeList {
    pub fn new(src: Vec<usize>, dst: Vec<usize>) -> Self {
        assert_eq!(src.len(), dst.len(), "edge endpoint lists differ in length");
        Self { src, dst }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Constant sparse matrix stored as per-row `(column, value)` lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert!(rows.iter().flatten().all(|&(c, _)| c < cols));
        Self { cols, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    LeakyRelu(f64),
    Relu,
    Sigmoid,
    Tanh,
    Gelu,
    Softplus,
    Exp,
    ExpM1,
    Ln,
    Square,
    NormalCdf,
    Recip,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::LeakyRelu(s) => crate::special::leaky_relu(x, s),
            Unary::Relu => x.max(0.0),
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Gelu => x * std_normal_cdf(x),
            Unary::Softplus => softplus(x),
            Unary::Exp => x.exp(),
            Unary::ExpM1 => x.exp_m1(),
            Unary::Ln => x.ln(),
            Unary::Square => x * x,
            Unary::NormalCdf => std_normal_cdf(x),
            Unary::Recip => 1.0 / x,
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Gelu => std_normal_cdf(x) + x * std_normal_pdf(x),
            Unary::Softplus => sigmoid(x),
            Unary::Exp => y,
            Unary::ExpM1 => y + 1.0,
            Unary::Ln => 1.0 / x,
            Unary::Square => 2.0 * x,
            Unary::NormalCdf => std_normal_pdf(x),
            Unary::Recip => -y * y,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulCol(usize, usize),
    MulScalar(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    MatMul(usize, usize),
    Unary(usize, Unary),
    Sum(usize),
    SumRows(usize),
    SumCols(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    GatherRows(usize, Rc<[usize]>),
    ScatterRows(usize, Rc<[usize]>),
    SpMM(Rc<SparseRows>, usize),
    SegmentSoftmax(usize, Rc<[usize]>),
    EdgeDot {
        keys: usize,
        queries: usize,
        edges: Rc<EdgeList>,
        heads: usize,
    },
    EdgeAggregate {
        weights: usize,
        values: usize,
        edges: Rc<EdgeList>,
        heads: usize,
    },
    HeadDot {
        x: usize,
        a: usize,
        heads: usize,
    },
    LayerNorm(usize, f64),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
}

/// Records a forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<HashMap<ParamId, usize>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// A constant input (gradients are still computed but usually ignored).
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::from_vec(1, 1, vec![value]))
    }

    /// Bind a parameter. Repeated calls return the same node.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        if let Some(&node) = self.params.borrow().get(&id) {
            return Var { tape: self, id: node };
        }
        let v = self.constant(store.value(id).clone());
        self.params.borrow_mut().insert(id, v.id);
        v
    }

    /// Reverse sweep from a `1 x 1` output.
    pub fn backward(&self, output: Var<'_>) -> Gradients {
        assert_eq!(output.shape(), (1, 1), "backward expects a scalar output");
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[output.id] = Some(Tensor::filled(1, 1, 1.0));

        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            backprop(&nodes, node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }
        Gradients {
            grads,
            params: self.params.borrow().clone(),
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn accumulate_with(
    grads: &mut [Option<Tensor>],
    id: usize,
    shape: (usize, usize),
    f: impl FnOnce(&mut Tensor),
) {
    let slot = grads[id].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1));
    f(slot);
}

fn backprop(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |id: usize| -> &Tensor { &nodes[id].value };
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, g.scale(-1.0));
        }
        Op::Mul(a, b) => {
            accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y));
            accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y));
        }
        Op::AddRow(a, b) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, column_sums(g));
        }
        Op::MulCol(a, b) => {
            let av = val(*a);
            let bv = val(*b);
            let (n, m) = g.shape();
            let mut ga = Tensor::zeros(n, m);
            let mut gb = Tensor::zeros(n, 1);
            for i in 0..n {
                let s = bv.get(i, 0);
                let grow = g.row(i);
                let arow = av.row(i);
                let mut acc = 0.0;
                for (j, gij) in grow.iter().enumerate() {
                    ga.set(i, j, gij * s);
                    acc += gij * arow[j];
                }
                gb.set(i, 0, acc);
            }
            accumulate(grads, *a, ga);
            accumulate(grads, *b, gb);
        }
        Op::MulScalar(a, s) => {
            let sv = val(*s).scalar();
            accumulate(grads, *a, g.scale(sv));
            let dot: f64 = g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).sum();
            accumulate(grads, *s, Tensor::from_vec(1, 1, vec![dot]));
        }
        Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
        Op::Offset(a) => accumulate(grads, *a, g.clone()),
        Op::MatMul(a, b) => {
            let av = val(*a);
            let bv = val(*b);
            accumulate_with(grads, *a, av.shape(), |ga| matmul_nt_acc(g, bv, ga));
            accumulate_with(grads, *b, bv.shape(), |gb| matmul_tn_acc(av, g, gb));
        }
        Op::Unary(a, f) => {
            let x = val(*a);
            let y = &node.value;
            let mut ga = Tensor::zeros(x.rows(), x.cols());
            for (((o, &gi), &xi), &yi) in ga
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(x.data())
                .zip(y.data())
            {
                *o = gi * f.derivative(xi, yi);
            }
            accumulate(grads, *a, ga);
        }
        Op::Sum(a) => {
            let (r, c) = val(*a).shape();
            accumulate(grads, *a, Tensor::filled(r, c, g.scalar()));
        }
        Op::SumRows(a) => {
            let (r, c) = val(*a).shape();
            let mut ga = Tensor::zeros(r, c);
            for i in 0..r {
                ga.row_mut(i).copy_from_slice(g.row(0));
            }
            accumulate(grads, *a, ga);
        }
        Op::SumCols(a) => {
            let (r, c) = val(*a).shape();
            let mut ga = Tensor::zeros(r, c);
            for i in 0..r {
                let gi = g.get(i, 0);
                ga.row_mut(i).iter_mut().for_each(|x| *x = gi);
            }
            accumulate(grads, *a, ga);
        }
        Op::ConcatCols(parts) => {
            let mut offset = 0;
            for &p in parts {
                let (r, c) = val(p).shape();
                let mut gp = Tensor::zeros(r, c);
                for i in 0..r {
                    gp.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + c]);
                }
                offset += c;
                accumulate(grads, p, gp);
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            let cols = g.cols();
            for &p in parts {
                let r = val(p).rows();
                let gp = Tensor::from_vec(
                    r,
                    cols,
                    g.data()[offset * cols..(offset + r) * cols].to_vec(),
                );
                offset += r;
                accumulate(grads, p, gp);
            }
        }
        Op::SliceCols(a, start) => {
            let shape = val(*a).shape();
            let width = g.cols();
            accumulate_with(grads, *a, shape, |ga| {
                for i in 0..shape.0 {
                    for (o, &x) in ga.row_mut(i)[*start..*start + width].iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
            });
        }
        Op::SliceRows(a, start) => {
            let shape = val(*a).shape();
            accumulate_with(grads, *a, shape, |ga| {
                for i in 0..g.rows() {
                    for (o, &x) in ga.row_mut(start + i).iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
            });
        }
        Op::GatherRows(a, idx) => {
            let shape = val(*a).shape();
            accumulate_with(grads, *a, shape, |ga| {
                for (i, &src) in idx.iter().enumerate() {
                    for (o, &x) in ga.row_mut(src).iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
            });
        }
        Op::ScatterRows(a, idx) => {
            let shape = val(*a).shape();
            let mut ga = Tensor::zeros(shape.0, shape.1);
            for (i, &dst) in idx.iter().enumerate() {
                ga.row_mut(i).copy_from_slice(g.row(dst));
            }
            accumulate(grads, *a, ga);
        }
        Op::SpMM(sparse, a) => {
            let shape = val(*a).shape();
            accumulate_with(grads, *a, shape, |ga| {
                for (r, entries) in sparse.rows.iter().enumerate() {
                    let grow = g.row(r);
                    for &(c, w) in entries {
                        for (o, &x) in ga.row_mut(c).iter_mut().zip(grow) {
                            *o += w * x;
                        }
                    }
                }
            });
        }
        Op::SegmentSoftmax(a, seg) => {
            let y = &node.value;
            let (e, h) = y.shape();
            let n_seg = seg.iter().copied().max().map_or(0, |m| m + 1);
            let mut dots = vec![0.0; n_seg * h];
            for i in 0..e {
                for c in 0..h {
                    dots[seg[i] * h + c] += y.get(i, c) * g.get(i, c);
                }
            }
            let mut ga = Tensor::zeros(e, h);
            for i in 0..e {
                for c in 0..h {
                    let yi = y.get(i, c);
                    ga.set(i, c, yi * (g.get(i, c) - dots[seg[i] * h + c]));
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::EdgeDot {
            keys,
            queries,
            edges,
            heads,
        } => {
            let k = val(*keys);
            let q = val(*queries);
            let d = k.cols() / heads;
            let mut gk = Tensor::zeros(k.rows(), k.cols());
            let mut gq = Tensor::zeros(q.rows(), q.cols());
            for (e, (&s, &t)) in edges.src.iter().zip(&edges.dst).enumerate() {
                for hd in 0..*heads {
                    let ge = g.get(e, hd);
                    if ge == 0.0 {
                        continue;
                    }
                    let span = hd * d..(hd + 1) * d;
                    let krow = &k.row(s)[span.clone()];
                    let qrow = &q.row(t)[span.clone()];
                    for (o, &x) in gk.row_mut(s)[span.clone()].iter_mut().zip(qrow) {
                        *o += ge * x;
                    }
                    for (o, &x) in gq.row_mut(t)[span].iter_mut().zip(krow) {
                        *o += ge * x;
                    }
                }
            }
            accumulate(grads, *keys, gk);
            accumulate(grads, *queries, gq);
        }
        Op::EdgeAggregate {
            weights,
            values,
            edges,
            heads,
        } => {
            let w = val(*weights);
            let v = val(*values);
            let d = v.cols() / heads;
            let mut gw = Tensor::zeros(w.rows(), w.cols());
            let mut gv = Tensor::zeros(v.rows(), v.cols());
            for (e, (&s, &t)) in edges.src.iter().zip(&edges.dst).enumerate() {
                for hd in 0..*heads {
                    let span = hd * d..(hd + 1) * d;
                    let grow = &g.row(t)[span.clone()];
                    let vrow = &v.row(s)[span.clone()];
                    let dot: f64 = grow.iter().zip(vrow).map(|(a, b)| a * b).sum();
                    gw.set(e, hd, dot);
                    let we = w.get(e, hd);
                    for (o, &x) in gv.row_mut(s)[span].iter_mut().zip(grow) {
                        *o += we * x;
                    }
                }
            }
            accumulate(grads, *weights, gw);
            accumulate(grads, *values, gv);
        }
        Op::HeadDot { x, a, heads } => {
            let xv = val(*x);
            let av = val(*a);
            let d = av.cols();
            let mut gx = Tensor::zeros(xv.rows(), xv.cols());
            let mut ga = Tensor::zeros(av.rows(), av.cols());
            for i in 0..xv.rows() {
                for hd in 0..*heads {
                    let gi = g.get(i, hd);
                    if gi == 0.0 {
                        continue;
                    }
                    let xrow = &xv.row(i)[hd * d..(hd + 1) * d];
                    for (o, &aj) in gx.row_mut(i)[hd * d..(hd + 1) * d].iter_mut().zip(av.row(hd)) {
                        *o += gi * aj;
                    }
                    for (o, &xj) in ga.row_mut(hd).iter_mut().zip(xrow) {
                        *o += gi * xj;
                    }
                }
            }
            accumulate(grads, *x, gx);
            accumulate(grads, *a, ga);
        }
        Op::LayerNorm(a, eps) => {
            let x = val(*a);
            let (n, m) = x.shape();
            let mut ga = Tensor::zeros(n, m);
            for i in 0..n {
                let row = x.row(i);
                let mean = row.iter().sum::<f64>() / m as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
                let inv = 1.0 / (var + eps).sqrt();
                let grow = g.row(i);
                let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                let mean_g = grow.iter().sum::<f64>() / m as f64;
                let mean_gx = grow.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / m as f64;
                for j in 0..m {
                    ga.set(i, j, inv * (grow[j] - mean_g - xhat[j] * mean_gx));
                }
            }
            accumulate(grads, *a, ga);
        }
    }
}

fn column_sums(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, t.cols());
    for i in 0..t.rows() {
        for (o, &x) in out.data_mut().iter_mut().zip(t.row(i)) {
            *o += x;
        }
    }
    out
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: HashMap<ParamId, usize>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when it did not influence the output.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads[var.id].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id).and_then(|&n| self.grads[n].as_ref())
    }

    /// Parameter gradients in ascending [`ParamId`] order.
    pub fn params(&self) -> Vec<(ParamId, &Tensor)> {
        let mut out: Vec<_> = self
            .params
            .iter()
            .filter_map(|(&p, &n)| self.grads[n].as_ref().map(|g| (p, g)))
            .collect();
        out.sort_by_key(|(p, _)| *p);
        out
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    fn same_tape(&self, other: &Var<'t>) {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
    }

    fn binary(&self, other: Var<'t>, op: Op, f: impl Fn(f64, f64) -> f64) -> Var<'t> {
        self.same_tape(&other);
        let out = self.value().zip_map(&other.value(), f);
        self.tape.push(out, op)
    }

    pub fn add(&self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(&self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Mul(self.id, other.id), |a, b| a * b)
    }

    /// `self (n x m) + row (1 x m)` broadcast over rows.
    pub fn add_row(&self, row: Var<'t>) -> Var<'t> {
        let a = self.value();
        let b = row.value();
        assert_eq!(b.shape(), (1, a.cols()), "add_row expects a 1 x {} row", a.cols());
        let mut out = (*a).clone();
        for i in 0..out.rows() {
            for (o, &x) in out.row_mut(i).iter_mut().zip(b.row(0)) {
                *o += x;
            }
        }
        self.tape.push(out, Op::AddRow(self.id, row.id))
    }

    /// `self (n x m) * col (n x 1)` broadcast over columns.
    pub fn mul_col(&self, col: Var<'t>) -> Var<'t> {
        let a = self.value();
        let b = col.value();
        assert_eq!(b.shape(), (a.rows(), 1), "mul_col expects an {} x 1 column", a.rows());
        let mut out = (*a).clone();
        for i in 0..out.rows() {
            let s = b.get(i, 0);
            out.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        self.tape.push(out, Op::MulCol(self.id, col.id))
    }

    /// Multiply by a `1 x 1` variable.
    pub fn mul_scalar(&self, s: Var<'t>) -> Var<'t> {
        let sv = s.value().scalar();
        let out = self.value().scale(sv);
        self.tape.push(out, Op::MulScalar(self.id, s.id))
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        let out = self.value().scale(s);
        self.tape.push(out, Op::Scale(self.id, s))
    }

    pub fn offset(&self, c: f64) -> Var<'t> {
        let out = self.value().map(|x| x + c);
        self.tape.push(out, Op::Offset(self.id))
    }

    pub fn matmul(&self, other: Var<'t>) -> Var<'t> {
        self.same_tape(&other);
        let out = self.value().matmul(&other.value());
        self.tape.push(out, Op::MatMul(self.id, other.id))
    }

    pub fn unary(&self, f: Unary) -> Var<'t> {
        let out = self.value().map(|x| f.apply(x));
        self.tape.push(out, Op::Unary(self.id, f))
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'t> {
        self.unary(Unary::LeakyRelu(slope))
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(Unary::Relu)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Unary::Sigmoid)
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(Unary::Tanh)
    }

    pub fn gelu(&self) -> Var<'t> {
        self.unary(Unary::Gelu)
    }

    pub fn softplus(&self) -> Var<'t> {
        self.unary(Unary::Softplus)
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(Unary::Exp)
    }

    pub fn exp_m1(&self) -> Var<'t> {
        self.unary(Unary::ExpM1)
    }

    pub fn ln(&self) -> Var<'t> {
        self.unary(Unary::Ln)
    }

    pub fn square(&self) -> Var<'t> {
        self.unary(Unary::Square)
    }

    pub fn normal_cdf(&self) -> Var<'t> {
        self.unary(Unary::NormalCdf)
    }

    pub fn recip(&self) -> Var<'t> {
        self.unary(Unary::Recip)
    }

    /// `1 - self`.
    pub fn one_minus(&self) -> Var<'t> {
        self.scale(-1.0).offset(1.0)
    }

    pub fn sum(&self) -> Var<'t> {
        let s = self.value().sum();
        self.tape.push(Tensor::from_vec(1, 1, vec![s]), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'t> {
        let n = self.value().len().max(1);
        self.sum().scale(1.0 / n as f64)
    }

    /// Column sums, `n x m -> 1 x m`.
    pub fn sum_rows(&self) -> Var<'t> {
        let out = column_sums(&self.value());
        self.tape.push(out, Op::SumRows(self.id))
    }

    /// Row sums, `n x m -> n x 1`.
    pub fn sum_cols(&self) -> Var<'t> {
        let a = self.value();
        let out = Tensor::from_vec(a.rows(), 1, (0..a.rows()).map(|i| a.row(i).iter().sum()).collect());
        self.tape.push(out, Op::SumCols(self.id))
    }

    pub fn slice_cols(&self, start: usize, width: usize) -> Var<'t> {
        let a = self.value();
        assert!(start + width <= a.cols(), "slice_cols out of range");
        let mut out = Tensor::zeros(a.rows(), width);
        for i in 0..a.rows() {
            out.row_mut(i).copy_from_slice(&a.row(i)[start..start + width]);
        }
        self.tape.push(out, Op::SliceCols(self.id, start))
    }

    pub fn slice_rows(&self, start: usize, count: usize) -> Var<'t> {
        let a = self.value();
        assert!(start + count <= a.rows(), "slice_rows out of range");
        let cols = a.cols();
        let out = Tensor::from_vec(count, cols, a.data()[start * cols..(start + count) * cols].to_vec());
        self.tape.push(out, Op::SliceRows(self.id, start))
    }

    /// `out[i] = self[idx[i]]`.
    pub fn gather_rows(&self, idx: Rc<[usize]>) -> Var<'t> {
        let a = self.value();
        let mut out = Tensor::zeros(idx.len(), a.cols());
        for (i, &src) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(a.row(src));
        }
        self.tape.push(out, Op::GatherRows(self.id, idx))
    }

    /// `out[idx[i]] += self[i]` into an `n_out`-row result.
    pub fn scatter_rows(&self, idx: Rc<[usize]>, n_out: usize) -> Var<'t> {
        let a = self.value();
        assert_eq!(idx.len(), a.rows(), "scatter index length mismatch");
        let mut out = Tensor::zeros(n_out, a.cols());
        for (i, &dst) in idx.iter().enumerate() {
            for (o, &x) in out.row_mut(dst).iter_mut().zip(a.row(i)) {
                *o += x;
            }
        }
        self.tape.push(out, Op::ScatterRows(self.id, idx))
    }

    /// `sparse (r x n) * self (n x m)`.
    pub fn spmm(&self, sparse: Rc<SparseRows>) -> Var<'t> {
        let a = self.value();
        assert_eq!(sparse.cols, a.rows(), "spmm shape mismatch");
        let mut out = Tensor::zeros(sparse.n_rows(), a.cols());
        for (r, entries) in sparse.rows.iter().enumerate() {
            for &(c, w) in entries {
                for (o, &x) in out.row_mut(r).iter_mut().zip(a.row(c)) {
                    *o += w * x;
                }
            }
        }
        self.tape.push(out, Op::SpMM(sparse, self.id))
    }

    /// Softmax of each column within groups of rows sharing a segment id.
    pub fn segment_softmax(&self, segments: Rc<[usize]>) -> Var<'t> {
        let a = self.value();
        let (e, h) = a.shape();
        assert_eq!(segments.len(), e, "segment ids must cover every row");
        let n_seg = segments.iter().copied().max().map_or(0, |m| m + 1);
        let mut maxes = vec![f64::NEG_INFINITY; n_seg * h];
        for i in 0..e {
            for c in 0..h {
                let m = &mut maxes[segments[i] * h + c];
                *m = m.max(a.get(i, c));
            }
        }
        let mut out = Tensor::zeros(e, h);
        let mut sums = vec![0.0; n_seg * h];
        for i in 0..e {
            for c in 0..h {
                let v = (a.get(i, c) - maxes[segments[i] * h + c]).exp();
                out.set(i, c, v);
                sums[segments[i] * h + c] += v;
            }
        }
        for i in 0..e {
            for c in 0..h {
                let v = out.get(i, c) / sums[segments[i] * h + c];
                out.set(i, c, v);
            }
        }
        self.tape.push(out, Op::SegmentSoftmax(self.id, segments))
    }

    /// Per-edge, per-head dot products `<keys[src], queries[dst]>` -> `E x heads`.
    pub fn edge_dot(&self, queries: Var<'t>, edges: Rc<EdgeList>, heads: usize) -> Var<'t> {
        let k = self.value();
        let q = queries.value();
        assert_eq!(k.cols(), q.cols(), "edge_dot width mismatch");
        assert_eq!(k.cols() % heads, 0, "heads must divide width");
        let d = k.cols() / heads;
        let mut out = Tensor::zeros(edges.len(), heads);
        for (e, (&s, &t)) in edges.src.iter().zip(&edges.dst).enumerate() {
            for hd in 0..heads {
                let span = hd * d..(hd + 1) * d;
                let dot: f64 = k.row(s)[span.clone()].iter().zip(&q.row(t)[span]).map(|(a, b)| a * b).sum();
                out.set(e, hd, dot);
            }
        }
        self.tape.push(
            out,
            Op::EdgeDot {
                keys: self.id,
                queries: queries.id,
                edges,
                heads,
            },
        )
    }

    /// `out[dst] += weights[e, h] * values[src]` per head block; `self` is
    /// the `E x heads` weight matrix.
    pub fn edge_aggregate(&self, values: Var<'t>, edges: Rc<EdgeList>, heads: usize, n_out: usize) -> Var<'t> {
        let w = self.value();
        let v = values.value();
        assert_eq!(w.shape(), (edges.len(), heads), "edge weight shape mismatch");
        assert_eq!(v.cols() % heads, 0, "heads must divide width");
        let d = v.cols() / heads;
        let mut out = Tensor::zeros(n_out, v.cols());
        for (e, (&s, &t)) in edges.src.iter().zip(&edges.dst).enumerate() {
            for hd in 0..heads {
                let we = w.get(e, hd);
                let span = hd * d..(hd + 1) * d;
                let src_row = &v.row(s)[span.clone()];
                for (o, &x) in out.row_mut(t)[span].iter_mut().zip(src_row) {
                    *o += we * x;
                }
            }
        }
        self.tape.push(
            out,
            Op::EdgeAggregate {
                weights: self.id,
                values: values.id,
                edges,
                heads,
            },
        )
    }

    /// `self (n x heads*d)` dotted block-wise with `a (heads x d)` -> `n x heads`.
    pub fn head_dot(&self, a: Var<'t>) -> Var<'t> {
        let x = self.value();
        let av = a.value();
        let (heads, d) = av.shape();
        assert_eq!(x.cols(), heads * d, "head_dot width mismatch");
        let mut out = Tensor::zeros(x.rows(), heads);
        for i in 0..x.rows() {
            for hd in 0..heads {
                let dot: f64 = x.row(i)[hd * d..(hd + 1) * d].iter().zip(av.row(hd)).map(|(p, q)| p * q).sum();
                out.set(i, hd, dot);
            }
        }
        self.tape.push(
            out,
            Op::HeadDot {
                x: self.id,
                a: a.id,
                heads,
            },
        )
    }

    /// Row-wise normalisation to zero mean and unit variance (no affine).
    pub fn layer_norm(&self, eps: f64) -> Var<'t> {
        let x = self.value();
        let (n, m) = x.shape();
        let mut out = Tensor::zeros(n, m);
        for i in 0..n {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (o, &v) in out.row_mut(i).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
        }
        self.tape.push(out, Op::LayerNorm(self.id, eps))
    }
}

pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Var<'t> {
    assert!(!parts.is_empty(), "concat of nothing");
    let tape = parts[0].tape;
    let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
    let rows = values[0].rows();
    let cols: usize = values.iter().map(|v| v.cols()).sum();
    let mut out = Tensor::zeros(rows, cols);
    for i in 0..rows {
        let mut offset = 0;
        for v in &values {
            assert_eq!(v.rows(), rows, "concat_cols row mismatch");
            out.row_mut(i)[offset..offset + v.cols()].copy_from_slice(v.row(i));
            offset += v.cols();
        }
    }
    tape.push(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect()))
}

pub fn concat_rows<'t>(parts: &[Var<'t>]) -> Var<'t> {
    assert!(!parts.is_empty(), "concat of nothing");
    let tape = parts[0].tape;
    let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
    let cols = values[0].cols();
    let mut data = Vec::new();
    let mut rows = 0;
    for v in &values {
        assert_eq!(v.cols(), cols, "concat_rows column mismatch");
        data.extend_from_slice(v.data());
        rows += v.rows();
    }
    tape.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.iter().map(|p| p.id).collect()))
}
