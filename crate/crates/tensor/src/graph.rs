//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in creation
//! order. [`Graph::backward`] walks the tape in reverse and returns the
//! gradients of a scalar loss with respect to every node that requires one.
//! Parameters live in a [`ParamStore`] outside the graph; each forward pass
//! builds a fresh graph that references them by [`ParamId`].

use std::cell::{Ref, RefCell};
use std::fmt;

use crate::error::{invalid, mismatch, Result, TensorError};
use crate::params::{ParamGrads, ParamId, ParamStore};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn};
use crate::{Scalar, Tensor};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddBias(usize, usize),
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Relu(usize),
    Gelu(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
        d: usize,
    },
    Softmax {
        x: usize,
        outer: usize,
        len: usize,
        inner: usize,
    },
    MeanPool {
        x: usize,
        outer: usize,
        len: usize,
        inner: usize,
        mask: Option<Vec<bool>>,
        counts: Vec<usize>,
    },
    SumAxis {
        x: usize,
        outer: usize,
        len: usize,
        inner: usize,
    },
    SumAll(usize),
    Concat {
        parts: Vec<usize>,
        outer: usize,
        widths: Vec<usize>,
    },
    Embedding {
        table: usize,
        ids: Vec<usize>,
        dim: usize,
    },
    Conv1d {
        x: usize,
        w: usize,
        b: Option<usize>,
        geom: ConvGeom,
    },
    Upsample {
        x: usize,
        rows: usize,
        len: usize,
        factor: usize,
    },
    Reshape(usize),
    SwapLast2 {
        x: usize,
        batch: usize,
        rows: usize,
        cols: usize,
    },
    Attention {
        q: usize,
        k: usize,
        v: usize,
        heads: usize,
        batch: usize,
        len: usize,
        dm: usize,
        probs: Vec<T>,
    },
    Mse {
        pred: usize,
        target: usize,
    },
    CrossEntropy {
        logits: usize,
        classes: usize,
        labels: Vec<usize>,
        row_weights: Vec<T>,
        probs: Vec<T>,
        total_weight: T,
    },
    StraightThrough {
        pre: usize,
    },
    WeightedSum {
        weights: usize,
        experts: Vec<usize>,
        batch: usize,
        dim: usize,
    },
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    c_in: usize,
    len: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_len: usize,
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Recording of one forward computation.
pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T: Scalar> {
    id: usize,
    graph: &'g Graph<T>,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.shape())
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var {
            id: nodes.len() - 1,
            graph: self,
        }
    }

    /// Leaf that receives a gradient.
    pub fn input(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf holding the current value of a stored parameter. Frozen
    /// parameters enter as constants.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Var<'_, T> {
        let p = store.get(id);
        let var = self.push(p.value.clone(), Op::Leaf, p.trainable);
        self.nodes.borrow_mut()[var.id].param = Some(id);
        var
    }

    fn rg(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![T::one()]);
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !nodes[id].requires_grad {
                continue;
            }
            backprop(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let mut out: Vec<Option<Vec<T>>> = Vec::with_capacity(grads.len());
        for (id, g) in grads.into_iter().enumerate() {
            out.push(g.filter(|_| nodes[id].requires_grad));
        }
        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (i, p)))
            .collect();
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients {
            grads: out,
            shapes,
            params,
        })
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(usize, ParamId)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `var`, or `None` when it is unreachable from the loss or
    /// does not require a gradient.
    pub fn get(&self, var: Var<'_, T>) -> Option<Tensor<T>> {
        let g = self.grads.get(var.id)?.as_ref()?;
        Some(Tensor::new(self.shapes[var.id].clone(), g.clone()).expect("gradient shape"))
    }

    /// Per-parameter gradients summed over every use in the graph.
    pub fn params(&self, store: &ParamStore<T>) -> ParamGrads<T> {
        let mut out = ParamGrads::zeros_like(store);
        for &(node, pid) in &self.params {
            if let Some(Some(g)) = self.grads.get(node) {
                out.accumulate(pid, g);
            }
        }
        out
    }
}

fn acc<T: Scalar>(grads: &mut [Option<Vec<T>>], id: usize, len: usize) -> &mut Vec<T> {
    grads[id].get_or_insert_with(|| vec![T::zero(); len])
}

fn backprop<T: Scalar>(nodes: &[Node<T>], id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let rg = |i: usize| nodes[i].requires_grad;
    let len = |i: usize| nodes[i].value.len();
    let val = |i: usize| nodes[i].value.data();
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            for &p in [a, b].iter() {
                if rg(*p) {
                    let d = acc(grads, *p, len(*p));
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += *g);
                }
            }
        }
        Op::Sub(a, b) => {
            if rg(*a) {
                let d = acc(grads, *a, len(*a));
                d.iter_mut().zip(g).for_each(|(d, g)| *d += *g);
            }
            if rg(*b) {
                let d = acc(grads, *b, len(*b));
                d.iter_mut().zip(g).for_each(|(d, g)| *d -= *g);
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            if rg(*a) {
                let d = acc(grads, *a, av.len());
                for i in 0..g.len() {
                    d[i] += g[i] * bv[i];
                }
            }
            if rg(*b) {
                let d = acc(grads, *b, bv.len());
                for i in 0..g.len() {
                    d[i] += g[i] * av[i];
                }
            }
        }
        Op::Scale(a, c) => {
            if rg(*a) {
                let d = acc(grads, *a, len(*a));
                d.iter_mut().zip(g).for_each(|(d, g)| *d += *g * *c);
            }
        }
        Op::AddBias(x, b) => {
            if rg(*x) {
                let d = acc(grads, *x, len(*x));
                d.iter_mut().zip(g).for_each(|(d, g)| *d += *g);
            }
            if rg(*b) {
                let n = len(*b);
                let d = acc(grads, *b, n);
                for row in g.chunks(n) {
                    d.iter_mut().zip(row).for_each(|(d, g)| *d += *g);
                }
            }
        }
        Op::MatMul { a, b, m, k, n } => {
            if rg(*a) {
                let bv = val(*b);
                let d = acc(grads, *a, m * k);
                gemm_nt(g, bv, d, *m, *n, *k);
            }
            if rg(*b) {
                let av = val(*a);
                let d = acc(grads, *b, k * n);
                gemm_tn(av, g, d, *m, *k, *n);
            }
        }
        Op::Relu(x) => {
            if rg(*x) {
                let xv = val(*x);
                let d = acc(grads, *x, xv.len());
                for i in 0..g.len() {
                    if xv[i] > T::zero() {
                        d[i] += g[i];
                    }
                }
            }
        }
        Op::Gelu(x) => {
            if rg(*x) {
                let xv = val(*x);
                let d = acc(grads, *x, xv.len());
                for i in 0..g.len() {
                    d[i] += g[i] * gelu_grad(xv[i]);
                }
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            rstd,
            d: dim,
        } => {
            let dim = *dim;
            let gv = val(*gamma);
            if rg(*beta) {
                let d = acc(grads, *beta, dim);
                for row in g.chunks(dim) {
                    d.iter_mut().zip(row).for_each(|(d, g)| *d += *g);
                }
            }
            if rg(*gamma) {
                let d = acc(grads, *gamma, dim);
                for (row, xh) in g.chunks(dim).zip(xhat.chunks(dim)) {
                    for j in 0..dim {
                        d[j] += row[j] * xh[j];
                    }
                }
            }
            if rg(*x) {
                let n = T::of(dim as f64);
                let d = acc(grads, *x, g.len());
                for (r, (row, xh)) in g.chunks(dim).zip(xhat.chunks(dim)).enumerate() {
                    let mut sum_dxh = T::zero();
                    let mut sum_dxh_xh = T::zero();
                    for j in 0..dim {
                        let dxh = row[j] * gv[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[j];
                    }
                    let scale = rstd[r] / n;
                    for j in 0..dim {
                        let dxh = row[j] * gv[j];
                        d[r * dim + j] += scale * (n * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                    }
                }
            }
        }
        Op::Softmax {
            x,
            outer,
            len: l,
            inner,
        } => {
            if rg(*x) {
                let y = nodes[id].value.data();
                let d = acc(grads, *x, y.len());
                for o in 0..*outer {
                    for i in 0..*inner {
                        let at = |j: usize| o * l * inner + j * inner + i;
                        let dot: T = (0..*l).map(|j| g[at(j)] * y[at(j)]).sum();
                        for j in 0..*l {
                            d[at(j)] += y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
            }
        }
        Op::MeanPool {
            x,
            outer,
            len: l,
            inner,
            mask,
            counts,
        } => {
            if rg(*x) {
                let d = acc(grads, *x, outer * l * inner);
                for o in 0..*outer {
                    if counts[o] == 0 {
                        continue;
                    }
                    let c = T::of(counts[o] as f64);
                    for j in 0..*l {
                        if mask.as_ref().is_some_and(|m| !m[o * l + j]) {
                            continue;
                        }
                        for i in 0..*inner {
                            d[o * l * inner + j * inner + i] += g[o * inner + i] / c;
                        }
                    }
                }
            }
        }
        Op::SumAxis {
            x,
            outer,
            len: l,
            inner,
        } => {
            if rg(*x) {
                let d = acc(grads, *x, outer * l * inner);
                for o in 0..*outer {
                    for j in 0..*l {
                        for i in 0..*inner {
                            d[o * l * inner + j * inner + i] += g[o * inner + i];
                        }
                    }
                }
            }
        }
        Op::SumAll(x) => {
            if rg(*x) {
                let d = acc(grads, *x, len(*x));
                d.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Concat {
            parts,
            outer,
            widths,
        } => {
            let total: usize = widths.iter().sum();
            let mut offset = 0;
            for (p, w) in parts.iter().zip(widths) {
                if rg(*p) {
                    let d = acc(grads, *p, outer * w);
                    for o in 0..*outer {
                        let src = &g[o * total + offset..o * total + offset + w];
                        d[o * w..(o + 1) * w]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, g)| *d += *g);
                    }
                }
                offset += w;
            }
        }
        Op::Embedding { table, ids, dim } => {
            if rg(*table) {
                let d = acc(grads, *table, len(*table));
                for (r, &tok) in ids.iter().enumerate() {
                    let src = &g[r * dim..(r + 1) * dim];
                    d[tok * dim..(tok + 1) * dim]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(d, g)| *d += *g);
                }
            }
        }
        Op::Conv1d { x, w, b, geom } => {
            let gm = *geom;
            let ck = gm.c_in * gm.kernel;
            if let Some(b) = b {
                if rg(*b) {
                    let d = acc(grads, *b, gm.c_out);
                    for bi in 0..gm.batch {
                        for co in 0..gm.c_out {
                            let off = (bi * gm.c_out + co) * gm.out_len;
                            d[co] += g[off..off + gm.out_len].iter().copied().sum::<T>();
                        }
                    }
                }
            }
            let xv = val(*x);
            let wv = val(*w);
            let mut cols = vec![T::zero(); ck * gm.out_len];
            let need_w = rg(*w);
            let need_x = rg(*x);
            let mut dw = if need_w { vec![T::zero(); gm.c_out * ck] } else { Vec::new() };
            let mut dx = if need_x { vec![T::zero(); xv.len()] } else { Vec::new() };
            let mut dcols = vec![T::zero(); ck * gm.out_len];
            for bi in 0..gm.batch {
                let gout = &g[bi * gm.c_out * gm.out_len..(bi + 1) * gm.c_out * gm.out_len];
                if need_w {
                    im2col(&xv[bi * gm.c_in * gm.len..(bi + 1) * gm.c_in * gm.len], &gm, &mut cols);
                    gemm_nt(gout, &cols, &mut dw, gm.c_out, gm.out_len, ck);
                }
                if need_x {
                    dcols.iter_mut().for_each(|v| *v = T::zero());
                    gemm_tn(wv, gout, &mut dcols, gm.c_out, ck, gm.out_len);
                    col2im(&dcols, &gm, &mut dx[bi * gm.c_in * gm.len..(bi + 1) * gm.c_in * gm.len]);
                }
            }
            if need_w {
                let d = acc(grads, *w, dw.len());
                d.iter_mut().zip(&dw).for_each(|(d, g)| *d += *g);
            }
            if need_x {
                let d = acc(grads, *x, dx.len());
                d.iter_mut().zip(&dx).for_each(|(d, g)| *d += *g);
            }
        }
        Op::Upsample {
            x,
            rows,
            len: l,
            factor,
        } => {
            if rg(*x) {
                let d = acc(grads, *x, rows * l);
                for r in 0..*rows {
                    for t in 0..l * factor {
                        d[r * l + t / factor] += g[r * l * factor + t];
                    }
                }
            }
        }
        Op::Reshape(x) => {
            if rg(*x) {
                let d = acc(grads, *x, g.len());
                d.iter_mut().zip(g).for_each(|(d, g)| *d += *g);
            }
        }
        Op::SwapLast2 {
            x,
            batch,
            rows,
            cols,
        } => {
            if rg(*x) {
                let d = acc(grads, *x, g.len());
                for b in 0..*batch {
                    let base = b * rows * cols;
                    for r in 0..*rows {
                        for c in 0..*cols {
                            d[base + r * cols + c] += g[base + c * rows + r];
                        }
                    }
                }
            }
        }
        Op::Attention {
            q,
            k,
            v,
            heads,
            batch,
            len: l,
            dm,
            probs,
        } => attention_backward(
            nodes,
            grads,
            (*q, *k, *v),
            (*heads, *batch, *l, *dm),
            probs,
            g,
        ),
        Op::Mse { pred, target } => {
            let (p, t) = (val(*pred), val(*target));
            let scale = g[0] * T::of(2.0) / T::of(p.len() as f64);
            if rg(*pred) {
                let d = acc(grads, *pred, p.len());
                for i in 0..p.len() {
                    d[i] += scale * (p[i] - t[i]);
                }
            }
            if rg(*target) {
                let d = acc(grads, *target, t.len());
                for i in 0..t.len() {
                    d[i] -= scale * (p[i] - t[i]);
                }
            }
        }
        Op::CrossEntropy {
            logits,
            classes,
            labels,
            row_weights,
            probs,
            total_weight,
        } => {
            if rg(*logits) && *total_weight > T::zero() {
                let c = *classes;
                let d = acc(grads, *logits, probs.len());
                for (r, (&label, &w)) in labels.iter().zip(row_weights).enumerate() {
                    if w == T::zero() {
                        continue;
                    }
                    let s = g[0] * w / *total_weight;
                    for j in 0..c {
                        let onehot = if j == label { T::one() } else { T::zero() };
                        d[r * c + j] += s * (probs[r * c + j] - onehot);
                    }
                }
            }
        }
        Op::StraightThrough { pre } => {
            if rg(*pre) {
                let d = acc(grads, *pre, g.len());
                d.iter_mut().zip(g).for_each(|(d, g)| *d += *g);
            }
        }
        Op::WeightedSum {
            weights,
            experts,
            batch,
            dim,
        } => {
            let m = experts.len();
            let wv = val(*weights);
            if rg(*weights) {
                let mut dw = vec![T::zero(); batch * m];
                for (e, &x) in experts.iter().enumerate() {
                    let xv = val(x);
                    for b in 0..*batch {
                        let mut s = T::zero();
                        for j in 0..*dim {
                            s += g[b * dim + j] * xv[b * dim + j];
                        }
                        dw[b * m + e] += s;
                    }
                }
                let d = acc(grads, *weights, batch * m);
                d.iter_mut().zip(&dw).for_each(|(d, g)| *d += *g);
            }
            for (e, &x) in experts.iter().enumerate() {
                if rg(x) {
                    let d = acc(grads, x, batch * dim);
                    for b in 0..*batch {
                        let w = wv[b * m + e];
                        for j in 0..*dim {
                            d[b * dim + j] += w * g[b * dim + j];
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::type_complexity)]
fn attention_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    (q, k, v): (usize, usize, usize),
    (heads, batch, l, dm): (usize, usize, usize, usize),
    probs: &[T],
    g: &[T],
) {
    let dh = dm / heads;
    let scale = T::one() / T::of(dh as f64).sqrt();
    let (qv, kv, vv) = (
        nodes[q].value.data(),
        nodes[k].value.data(),
        nodes[v].value.data(),
    );
    let mut dq = vec![T::zero(); qv.len()];
    let mut dk = vec![T::zero(); kv.len()];
    let mut dvv = vec![T::zero(); vv.len()];
    let mut dp = vec![T::zero(); l];
    for b in 0..batch {
        for h in 0..heads {
            let p = &probs[(b * heads + h) * l * l..(b * heads + h + 1) * l * l];
            let at = |t: usize, j: usize| (b * l + t) * dm + h * dh + j;
            for i in 0..l {
                let prow = &p[i * l..(i + 1) * l];
                // dV[t] += p[i,t] * dO[i]; dP[i,t] = dO[i] . V[t]
                for t in 0..l {
                    let mut s = T::zero();
                    for j in 0..dh {
                        dvv[at(t, j)] += prow[t] * g[at(i, j)];
                        s += g[at(i, j)] * vv[at(t, j)];
                    }
                    dp[t] = s;
                }
                let dot: T = (0..l).map(|t| dp[t] * prow[t]).sum();
                for t in 0..l {
                    let ds = prow[t] * (dp[t] - dot) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    for j in 0..dh {
                        dq[at(i, j)] += ds * kv[at(t, j)];
                        dk[at(t, j)] += ds * qv[at(i, j)];
                    }
                }
            }
        }
    }
    for (id, d) in [(q, dq), (k, dk), (v, dvv)] {
        if nodes[id].requires_grad {
            let a = acc(grads, id, d.len());
            a.iter_mut().zip(&d).for_each(|(a, d)| *a += *d);
        }
    }
}

fn im2col<T: Scalar>(x: &[T], gm: &ConvGeom, cols: &mut [T]) {
    for ci in 0..gm.c_in {
        for kk in 0..gm.kernel {
            let row = &mut cols[(ci * gm.kernel + kk) * gm.out_len..(ci * gm.kernel + kk + 1) * gm.out_len];
            for (t, c) in row.iter_mut().enumerate() {
                let pos = (t * gm.stride + kk) as isize - gm.pad as isize;
                *c = if pos >= 0 && (pos as usize) < gm.len {
                    x[ci * gm.len + pos as usize]
                } else {
                    T::zero()
                };
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], gm: &ConvGeom, dx: &mut [T]) {
    for ci in 0..gm.c_in {
        for kk in 0..gm.kernel {
            let row = &cols[(ci * gm.kernel + kk) * gm.out_len..(ci * gm.kernel + kk + 1) * gm.out_len];
            for (t, c) in row.iter().enumerate() {
                let pos = (t * gm.stride + kk) as isize - gm.pad as isize;
                if pos >= 0 && (pos as usize) < gm.len {
                    dx[ci * gm.len + pos as usize] += *c;
                }
            }
        }
    }
}

#[inline]
fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let u = c * (x + T::of(0.044715) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

#[inline]
fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let u = c * (x + T::of(0.044715) * x * x * x);
    let th = u.tanh();
    let du = c * (T::one() + T::of(3.0 * 0.044715) * x * x);
    T::of(0.5) * (T::one() + th) + T::of(0.5) * x * (T::one() - th * th) * du
}

/// (outer, len, inner) decomposition of `shape` around `axis`.
fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(invalid(op, format!("axis {axis} out of range for {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor<T>> {
        Ref::map(self.graph.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        self.value().clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    /// Copy of this value cut off from the tape (stop-gradient).
    pub fn detach(&self) -> Var<'g, T> {
        self.graph.constant(self.to_tensor())
    }

    fn same_shape(&self, op: &'static str, other: &Var<'g, T>) -> Result<Vec<usize>> {
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return Err(mismatch(op, &a, &b));
        }
        Ok(a)
    }

    fn zip_with(&self, other: &Var<'g, T>, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let shape = self.same_shape(op, other)?;
        let (a, b) = (self.value(), other.value());
        let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(shape, data)
    }

    fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        let v = self.value();
        Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| f(*x)).collect()).expect("same shape")
    }

    pub fn add(&self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let t = self.zip_with(&other, "add", |a, b| a + b)?;
        let rg = self.graph.rg(&[self.id, other.id]);
        Ok(self.graph.push(t, Op::Add(self.id, other.id), rg))
    }

    pub fn sub(&self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let t = self.zip_with(&other, "sub", |a, b| a - b)?;
        let rg = self.graph.rg(&[self.id, other.id]);
        Ok(self.graph.push(t, Op::Sub(self.id, other.id), rg))
    }

    pub fn mul(&self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let t = self.zip_with(&other, "mul", |a, b| a * b)?;
        let rg = self.graph.rg(&[self.id, other.id]);
        Ok(self.graph.push(t, Op::Mul(self.id, other.id), rg))
    }

    pub fn scale(&self, c: T) -> Var<'g, T> {
        let t = self.map(|x| x * c);
        let rg = self.graph.rg(&[self.id]);
        self.graph.push(t, Op::Scale(self.id, c), rg)
    }

    /// Adds a vector along the last axis.
    pub fn add_bias(&self, bias: Var<'g, T>) -> Result<Var<'g, T>> {
        let shape = self.shape();
        let bshape = bias.shape();
        let n = *shape.last().unwrap_or(&0);
        if bshape.iter().product::<usize>() != n {
            return Err(mismatch("add_bias", &shape, &bshape));
        }
        let t = {
            let (x, b) = (self.value(), bias.value());
            let mut data = x.data().to_vec();
            for row in data.chunks_mut(n) {
                row.iter_mut().zip(b.data()).for_each(|(v, b)| *v += *b);
            }
            Tensor::new(shape, data)?
        };
        let rg = self.graph.rg(&[self.id, bias.id]);
        Ok(self.graph.push(t, Op::AddBias(self.id, bias.id), rg))
    }

    /// `[.., k] x [k, n] -> [.., n]`.
    pub fn matmul(&self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (ashape, bshape) = (self.shape(), other.shape());
        if ashape.is_empty() || bshape.len() != 2 || ashape[ashape.len() - 1] != bshape[0] {
            return Err(mismatch("matmul", &ashape, &bshape));
        }
        let k = bshape[0];
        let n = bshape[1];
        let m = ashape.iter().product::<usize>() / k.max(1);
        let mut out = vec![T::zero(); m * n];
        gemm_nn(self.value().data(), other.value().data(), &mut out, m, k, n);
        let mut shape = ashape[..ashape.len() - 1].to_vec();
        shape.push(n);
        let rg = self.graph.rg(&[self.id, other.id]);
        Ok(self.graph.push(
            Tensor::new(shape, out)?,
            Op::MatMul {
                a: self.id,
                b: other.id,
                m,
                k,
                n,
            },
            rg,
        ))
    }

    pub fn relu(&self) -> Var<'g, T> {
        let t = self.map(|x| x.max(T::zero()));
        let rg = self.graph.rg(&[self.id]);
        self.graph.push(t, Op::Relu(self.id), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Var<'g, T> {
        let t = self.map(gelu);
        let rg = self.graph.rg(&[self.id]);
        self.graph.push(t, Op::Gelu(self.id), rg)
    }

    /// Normalizes over the last axis, then applies `gamma * x + beta`.
    pub fn layer_norm(&self, gamma: Var<'g, T>, beta: Var<'g, T>) -> Result<Var<'g, T>> {
        let shape = self.shape();
        let d = *shape.last().unwrap_or(&0);
        if gamma.value().len() != d || beta.value().len() != d {
            return Err(mismatch("layer_norm", &shape, &gamma.shape()));
        }
        let x = self.value();
        let (gv, bv) = (gamma.value(), beta.value());
        let rows = x.len() / d.max(1);
        let mut xhat = vec![T::zero(); x.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); x.len()];
        let n = T::of(d as f64);
        for r in 0..rows {
            let row = &x.data()[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
            let rs = T::one() / (var + T::of(LN_EPS)).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        drop((x, gv, bv));
        let rg = self.graph.rg(&[self.id, gamma.id, beta.id]);
        Ok(self.graph.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                xhat,
                rstd,
                d,
            },
            rg,
        ))
    }

    pub fn softmax(&self, axis: usize) -> Result<Var<'g, T>> {
        let shape = self.shape();
        let (outer, l, inner) = split_axis("softmax", &shape, axis)?;
        let mut out = self.value().data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * l * inner + j * inner + i;
                let mx = (0..l).map(|j| out[at(j)]).fold(T::neg_infinity(), T::max);
                let mut s = T::zero();
                for j in 0..l {
                    let e = (out[at(j)] - mx).exp();
                    out[at(j)] = e;
                    s += e;
                }
                for j in 0..l {
                    out[at(j)] /= s;
                }
            }
        }
        let rg = self.graph.rg(&[self.id]);
        Ok(self.graph.push(
            Tensor::new(shape, out)?,
            Op::Softmax {
                x: self.id,
                outer,
                len: l,
                inner,
            },
            rg,
        ))
    }

    /// Mean over `axis`, counting only positions where `mask` (shape
    /// `[outer, len]`) is true. Groups with no valid position yield zeros.
    pub fn mean_pool(&self, axis: usize, mask: Option<&[bool]>) -> Result<Var<'g, T>> {
        let shape = self.shape();
        let (outer, l, inner) = split_axis("mean_pool", &shape, axis)?;
        if let Some(m) = mask {
            if m.len() != outer * l {
                return Err(mismatch("mean_pool", &shape, &[m.len()]));
            }
        }
        let x = self.value();
        let mut out = vec![T::zero(); outer * inner];
        let mut counts = vec![0usize; outer];
        for o in 0..outer {
            for j in 0..l {
                if mask.is_some_and(|m| !m[o * l + j]) {
                    continue;
                }
                counts[o] += 1;
                for i in 0..inner {
                    out[o * inner + i] += x.data()[o * l * inner + j * inner + i];
                }
            }
            if counts[o] > 0 {
                let c = T::of(counts[o] as f64);
                out[o * inner..(o + 1) * inner].iter_mut().for_each(|v| *v /= c);
            }
        }
        drop(x);
        let mut oshape = shape.clone();
        oshape.remove(axis);
        if oshape.is_empty() {
            oshape.push(1);
        }
        let rg = self.graph.rg(&[self.id]);
        Ok(self.graph.push(
            Tensor::new(oshape, out)?,
            Op::MeanPool {
                x: self.id,
                outer,
                len: l,
                inner,
                mask: mask.map(|m| m.to_vec()),
                counts,
            },
            rg,
        ))
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Var<'g, T>> {
        let shape = self.shape();
        let (outer, l, inner) = split_axis("sum_axis", &shape, axis)?;
        let x = self.value();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..l {
                for i in 0..inner {
                    out[o * inner + i] += x.data()[o * l * inner + j * inner + i];
                }
            }
        }
        drop(x);
        let mut oshape = shape.clone();
        oshape.remove(axis);
        if oshape.is_empty() {
            oshape.push(1);
        }
        let rg = self.graph.rg(&[self.id]);
        Ok(self.graph.push(
            Tensor::new(oshape, out)?,
            Op::SumAxis {
                x: self.id,
                outer,
                len: l,
                inner,
            },
            rg,
        ))
    }

    pub fn sum(&self) -> Var<'g, T> {
        let s = self.value().data().iter().copied().sum::<T>();
        let rg = self.graph.rg(&[self.id]);
        self.graph.push(Tensor::scalar(s), Op::SumAll(self.id), rg)
    }

    pub fn mean(&self) -> Var<'g, T> {
        let n = self.value().len().max(1);
        self.sum().scale(T::one() / T::of(n as f64))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'g, T>> {
        let t = self.to_tensor().reshape(shape)?;
        let rg = self.graph.rg(&[self.id]);
        Ok(self.graph.push(t, Op::Reshape(self.id), rg))
    }

    /// `[.., r, c] -> [.., c, r]`.
    pub fn swap_last2(&self) -> Result<Var<'g, T>> {
        let shape = self.shape();
        if shape.len() < 2 {
            return Err(invalid("swap_last2", format!("need rank >= 2, got {shape:?}")));
        }
        let (rows, cols) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let batch = shape[..shape.len() - 2].iter().product();
        let x = self.value();
        let mut out = vec![T::zero(); x.len()];
        for b in 0..batch {
            let base = b * rows * cols;
            for r in 0..rows {
                for c in 0..cols {
                    out[base + c * rows + r] = x.data()[base + r * cols + c];
                }
            }
        }
        drop(x);
        let mut oshape = shape.clone();
        let n = oshape.len();
        oshape.swap(n - 1, n - 2);
        let rg = self.graph.rg(&[self.id]);
        Ok(self.graph.push(
            Tensor::new(oshape, out)?,
            Op::SwapLast2 {
                x: self.id,
                batch,
                rows,
                cols,
            },
            rg,
        ))
    }

    /// Repeats each step of `[B, C, L]` along time `factor` times.
    pub fn upsample(&self, factor: usize) -> Result<Var<'g, T>> {
        let shape = self.shape();
        if shape.len() != 3 || factor == 0 {
            return Err(invalid("upsample", format!("need [B,C,L] and factor >= 1, got {shape:?}")));
        }
        let rows = shape[0] * shape[1];
        let l = shape[2];
        let x = self.value();
        let mut out = vec![T::zero(); rows * l * factor];
        for r in 0..rows {
            for t in 0..l * factor {
                out[r * l * factor + t] = x.data()[r * l + t / factor];
            }
        }
        drop(x);
        let rg = self.graph.rg(&[self.id]);
        Ok(self.graph.push(
            Tensor::new(vec![shape[0], shape[1], l * factor], out)?,
            Op::Upsample {
                x: self.id,
                rows,
                len: l,
                factor,
            },
            rg,
        ))
    }

    /// `x: [B, C_in, L]`, `w: [C_out, C_in, K]`, `b: [C_out]`.
    /// Output length is `floor((L + 2 pad - K) / stride) + 1`.
    pub fn conv1d(&self, w: Var<'g, T>, b: Option<Var<'g, T>>, stride: usize, pad: usize) -> Result<Var<'g, T>> {
        let (xs, ws) = (self.shape(), w.shape());
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || stride == 0 {
            return Err(mismatch("conv1d", &xs, &ws));
        }
        if let Some(b) = &b {
            if b.value().len() != ws[0] {
                return Err(mismatch("conv1d", &ws, &b.shape()));
            }
        }
        let (batch, c_in, len) = (xs[0], xs[1], xs[2]);
        let (c_out, kernel) = (ws[0], ws[2]);
        if len + 2 * pad < kernel {
            return Err(invalid("conv1d", format!("input length {len} shorter than kernel {kernel}")));
        }
        let out_len = (len + 2 * pad - kernel) / stride + 1;
        let geom = ConvGeom {
            batch,
            c_in,
            len,
            c_out,
            kernel,
            stride,
            pad,
            out_len,
        };
        let mut out = vec![T::zero(); batch * c_out * out_len];
        {
            let xv = self.value();
            let wv = w.value();
            let mut cols = vec![T::zero(); c_in * kernel * out_len];
            for bi in 0..batch {
                im2col(&xv.data()[bi * c_in * len..(bi + 1) * c_in * len], &geom, &mut cols);
                let o = &mut out[bi * c_out * out_len..(bi + 1) * c_out * out_len];
                gemm_nn(wv.data(), &cols, o, c_out, c_in * kernel, out_len);
                if let Some(b) = &b {
                    let bv = b.value();
                    for co in 0..c_out {
                        let bias = bv.data()[co];
                        o[co * out_len..(co + 1) * out_len].iter_mut().for_each(|v| *v += bias);
                    }
                }
            }
        }
        let mut ids = vec![self.id, w.id];
        if let Some(b) = &b {
            ids.push(b.id);
        }
        let rg = self.graph.rg(&ids);
        Ok(self.graph.push(
            Tensor::new(vec![batch, c_out, out_len], out)?,
            Op::Conv1d {
                x: self.id,
                w: w.id,
                b: b.map(|b| b.id),
                geom,
            },
            rg,
        ))
    }

    /// Multi-head scaled dot-product attention, encoder style (no causal
    /// mask). `self` is Q; all of Q, K, V are `[B, L, D]`. `key_mask`
    /// (`[B, L]`, true = real) sends padded keys to -inf before the softmax.
    pub fn attention(
        &self,
        k: Var<'g, T>,
        v: Var<'g, T>,
        heads: usize,
        key_mask: Option<&[bool]>,
    ) -> Result<Var<'g, T>> {
        let qs = self.shape();
        self.same_shape("attention", &k)?;
        self.same_shape("attention", &v)?;
        if qs.len() != 3 || heads == 0 || qs[2] % heads != 0 {
            return Err(invalid("attention", format!("shape {qs:?} with {heads} heads")));
        }
        let (batch, l, dm) = (qs[0], qs[1], qs[2]);
        if let Some(m) = key_mask {
            if m.len() != batch * l {
                return Err(mismatch("attention", &qs, &[m.len()]));
            }
        }
        let dh = dm / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut probs = vec![T::zero(); batch * heads * l * l];
        let mut out = vec![T::zero(); batch * l * dm];
        {
            let (qv, kv, vv) = (self.value(), k.value(), v.value());
            let (qv, kv, vv) = (qv.data(), kv.data(), vv.data());
            let mut row = vec![T::zero(); l];
            for b in 0..batch {
                let valid = |t: usize| key_mask.map_or(true, |m| m[b * l + t]);
                for h in 0..heads {
                    let at = |t: usize, j: usize| (b * l + t) * dm + h * dh + j;
                    let p = &mut probs[(b * heads + h) * l * l..(b * heads + h + 1) * l * l];
                    for i in 0..l {
                        let mut mx = T::neg_infinity();
                        for t in 0..l {
                            row[t] = if valid(t) {
                                let mut s = T::zero();
                                for j in 0..dh {
                                    s += qv[at(i, j)] * kv[at(t, j)];
                                }
                                s * scale
                            } else {
                                T::neg_infinity()
                            };
                            mx = mx.max(row[t]);
                        }
                        if mx == T::neg_infinity() {
                            continue;
                        }
                        let mut sum = T::zero();
                        for t in 0..l {
                            let e = (row[t] - mx).exp();
                            row[t] = e;
                            sum += e;
                        }
                        for t in 0..l {
                            let pt = row[t] / sum;
                            p[i * l + t] = pt;
                            if pt != T::zero() {
                                for j in 0..dh {
                                    out[at(i, j)] += pt * vv[at(t, j)];
                                }
                            }
                        }
                    }
                }
            }
        }
        let rg = self.graph.rg(&[self.id, k.id, v.id]);
        Ok(self.graph.push(
            Tensor::new(qs, out)?,
            Op::Attention {
                q: self.id,
                k: k.id,
                v: v.id,
                heads,
                batch,
                len: l,
                dm,
                probs,
            },
            rg,
        ))
    }

    /// Attention probabilities of the most recent [`Var::attention`] node,
    /// `[B, heads, L, L]`.
    pub fn attention_probs(&self) -> Option<Tensor<T>> {
        let nodes = self.graph.nodes.borrow();
        match &nodes[self.id].op {
            Op::Attention {
                heads,
                batch,
                len,
                probs,
                ..
            } => Tensor::new(vec![*batch, *heads, *len, *len], probs.clone()).ok(),
            _ => None,
        }
    }

    /// Concatenates along `axis`; all other dims must agree.
    pub fn concat(parts: &[Var<'g, T>], axis: usize) -> Result<Var<'g, T>> {
        let first = parts.first().ok_or_else(|| invalid("concat", "no inputs"))?;
        let graph = first.graph;
        let base = first.shape();
        if axis >= base.len() {
            return Err(invalid("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let outer: usize = base[..axis].iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        let mut axis_total = 0;
        for p in parts {
            let s = p.shape();
            if s.len() != base.len()
                || s[..axis] != base[..axis]
                || s[axis + 1..] != base[axis + 1..]
            {
                return Err(mismatch("concat", &base, &s));
            }
            axis_total += s[axis];
            widths.push(s[axis..].iter().product::<usize>());
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![T::zero(); outer * total];
        let mut offset = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let v = p.value();
            for o in 0..outer {
                out[o * total + offset..o * total + offset + w].copy_from_slice(&v.data()[o * w..(o + 1) * w]);
            }
            offset += w;
        }
        let mut shape = base.clone();
        shape[axis] = axis_total;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = graph.rg(&ids);
        Ok(graph.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                parts: ids,
                outer,
                widths,
            },
            rg,
        ))
    }

    /// Rows of a `[K, D]` table selected by `ids`; output `[ids.len(), D]`.
    pub fn embedding(&self, ids: &[usize]) -> Result<Var<'g, T>> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(invalid("embedding", format!("table must be [K, D], got {shape:?}")));
        }
        let (k, dim) = (shape[0], shape[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= k) {
            return Err(invalid("embedding", format!("id {bad} out of range for {k} rows")));
        }
        let table = self.value();
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            out.extend_from_slice(&table.data()[i * dim..(i + 1) * dim]);
        }
        drop(table);
        let rg = self.graph.rg(&[self.id]);
        Ok(self.graph.push(
            Tensor::new(vec![ids.len(), dim], out)?,
            Op::Embedding {
                table: self.id,
                ids: ids.to_vec(),
                dim,
            },
            rg,
        ))
    }

    /// Mean squared error.
    pub fn mse(&self, target: Var<'g, T>) -> Result<Var<'g, T>> {
        let t = self.zip_with(&target, "mse", |a, b| (a - b) * (a - b))?;
        let n = T::of(t.len().max(1) as f64);
        let loss = t.data().iter().copied().sum::<T>() / n;
        let rg = self.graph.rg(&[self.id, target.id]);
        Ok(self.graph.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred: self.id,
                target: target.id,
            },
            rg,
        ))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `[B, C]` logits. Rows labeled `ignore_class` are skipped; if every row
    /// is skipped the loss is 0 with zero gradient. Optional per-class weights
    /// give a weighted mean.
    pub fn cross_entropy(
        &self,
        labels: &[usize],
        ignore_class: Option<usize>,
        class_weights: Option<&[T]>,
    ) -> Result<Var<'g, T>> {
        let shape = self.shape();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(mismatch("cross_entropy", &shape, &[labels.len()]));
        }
        let c = shape[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(TensorError::LabelOutOfRange { label: bad, classes: c });
        }
        if let Some(w) = class_weights {
            if w.len() != c {
                return Err(mismatch("cross_entropy", &shape, &[w.len()]));
            }
        }
        let x = self.value();
        let mut probs = vec![T::zero(); x.len()];
        let mut row_weights = vec![T::zero(); labels.len()];
        let mut total = T::zero();
        let mut loss = T::zero();
        for (r, &label) in labels.iter().enumerate() {
            let row = &x.data()[r * c..(r + 1) * c];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().map(|v| (*v - mx).exp()).sum();
            for j in 0..c {
                probs[r * c + j] = (row[j] - mx).exp() / sum;
            }
            if Some(label) == ignore_class {
                continue;
            }
            let w = class_weights.map_or(T::one(), |w| w[label]);
            row_weights[r] = w;
            total += w;
            loss += w * (sum.ln() + mx - row[label]);
        }
        drop(x);
        let value = if total > T::zero() { loss / total } else { T::zero() };
        let rg = self.graph.rg(&[self.id]);
        Ok(self.graph.push(
            Tensor::scalar(value),
            Op::CrossEntropy {
                logits: self.id,
                classes: c,
                labels: labels.to_vec(),
                row_weights,
                probs,
                total_weight: total,
            },
            rg,
        ))
    }

    /// Straight-through estimator: the value of `self` (the quantized
    /// tensor) with the gradient routed unchanged to `pre`.
    pub fn straight_through(&self, pre: Var<'g, T>) -> Result<Var<'g, T>> {
        self.same_shape("straight_through", &pre)?;
        let t = self.to_tensor();
        let rg = self.graph.rg(&[pre.id]);
        Ok(self.graph.push(t, Op::StraightThrough { pre: pre.id }, rg))
    }

    /// `sum_m weights[:, m] * experts[m]`, with `self` as `[B, M]` weights and
    /// each expert `[B, D]`.
    pub fn weighted_sum(&self, experts: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let ws = self.shape();
        if ws.len() != 2 || ws[1] != experts.len() || experts.is_empty() {
            return Err(invalid("weighted_sum", format!("weights {ws:?} for {} experts", experts.len())));
        }
        let es = experts[0].shape();
        if es.len() != 2 || es[0] != ws[0] {
            return Err(mismatch("weighted_sum", &ws, &es));
        }
        for e in experts {
            experts[0].same_shape("weighted_sum", e)?;
        }
        let (batch, dim, m) = (es[0], es[1], experts.len());
        let mut out = vec![T::zero(); batch * dim];
        {
            let w = self.value();
            for (e, x) in experts.iter().enumerate() {
                let xv = x.value();
                for b in 0..batch {
                    let wb = w.data()[b * m + e];
                    for j in 0..dim {
                        out[b * dim + j] += wb * xv.data()[b * dim + j];
                    }
                }
            }
        }
        let mut ids = vec![self.id];
        ids.extend(experts.iter().map(|e| e.id));
        let rg = self.graph.rg(&ids);
        Ok(self.graph.push(
            Tensor::new(vec![batch, dim], out)?,
            Op::WeightedSum {
                weights: self.id,
                experts: experts.iter().map(|e| e.id).collect(),
                batch,
                dim,
            },
            rg,
        ))
    }
}
