//! Tensor-level reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive as it is evaluated. Nodes are appended
//! in evaluation order, so the node list is already a topological order and
//! [`Tape::backward`] is a single reverse sweep.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::tensor::{softmax_row_into, Element, Mask, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a tensor recorded on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone)]
enum Op<E: Element> {
    Leaf,
    MatMul { a: usize, b: usize, b_t: bool },
    Add { a: usize, b: usize },
    AddRow { a: usize, row: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, factor: E },
    SoftmaxRows { a: usize, mask: Option<Mask> },
    LayerNorm { x: usize, gamma: usize, beta: usize, eps: E },
    Gelu { a: usize },
    GatherRows { src: usize, rows: Arc<[usize]> },
    SliceBlock { a: usize, row0: usize, rows: usize, col0: usize, cols: usize },
    Assemble { parts: Vec<(usize, usize, usize)>, rows: usize, cols: usize },
    Reshape { a: usize },
    CrossEntropy { logits: usize, targets: Arc<[usize]> },
    Sum { a: usize },
}

impl<E: Element> Op<E> {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Add { a, b } | Op::Mul { a, b } => vec![*a, *b],
            Op::AddRow { a, row } => vec![*a, *row],
            Op::Scale { a, .. }
            | Op::SoftmaxRows { a, .. }
            | Op::Gelu { a }
            | Op::SliceBlock { a, .. }
            | Op::Reshape { a }
            | Op::Sum { a } => vec![*a],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::GatherRows { src, .. } => vec![*src],
            Op::Assemble { parts, .. } => parts.iter().map(|p| p.0).collect(),
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug, Clone)]
struct Node<E: Element> {
    value: Tensor<E>,
    op: Op<E>,
    requires_grad: bool,
}

/// Ordered record of primitive operations.
#[derive(Debug)]
pub struct Tape<E: Element = f64> {
    id: u64,
    nodes: Vec<Node<E>>,
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation. This is the reference definition everywhere.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_e<E: Element>(x: E) -> E {
    let c = E::lit(GELU_C);
    let a = E::lit(GELU_A);
    let half = E::lit(0.5);
    half * x * (E::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<E: Element>(x: E) -> E {
    let c = E::lit(GELU_C);
    let a = E::lit(GELU_A);
    let half = E::lit(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (E::one() + t) + half * x * (E::one() - t * t) * c * (E::one() + E::lit(3.0) * a * x * x)
}

fn shape_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{what}: {a:?} vs {b:?}"))
}

fn forward<E: Element>(op: &Op<E>, val: impl Fn(usize) -> Tensor<E>) -> Result<Tensor<E>> {
    Ok(match op {
        Op::Leaf => unreachable!("leaves carry their own value"),
        Op::MatMul { a, b, b_t } => {
            let (a, b) = (val(*a), val(*b));
            let (m, k) = a.dims2();
            let (br, bc) = b.dims2();
            let (kb, n) = if *b_t { (bc, br) } else { (br, bc) };
            if k != kb {
                return Err(shape_err("matmul", a.shape(), b.shape()));
            }
            let mut out = vec![E::zero(); m * n];
            E::gemm(m, k, n, a.values(), false, b.values(), *b_t, &mut out, false);
            Tensor::from_parts(vec![m, n], out)
        }
        Op::Add { a, b } => {
            let (a, b) = (val(*a), val(*b));
            a.zip_map(&b, |x, y| x + y)?
        }
        Op::Mul { a, b } => {
            let (a, b) = (val(*a), val(*b));
            a.zip_map(&b, |x, y| x * y)?
        }
        Op::AddRow { a, row } => {
            let (a, row) = (val(*a), val(*row));
            let (r, c) = a.dims2();
            if row.len() != c {
                return Err(shape_err("add_row", a.shape(), row.shape()));
            }
            let mut out = a.to_vec();
            for i in 0..r {
                for (o, &b) in out[i * c..(i + 1) * c].iter_mut().zip(row.values()) {
                    *o = *o + b;
                }
            }
            Tensor::from_parts(a.shape().to_vec(), out)
        }
        Op::Scale { a, factor } => val(*a).scale(*factor),
        Op::SoftmaxRows { a, mask } => super::tensor::softmax_rows(&val(*a), mask.as_ref())?,
        Op::LayerNorm { x, gamma, beta, eps } => {
            let (x, g, b) = (val(*x), val(*gamma), val(*beta));
            let (r, c) = x.dims2();
            if g.len() != c || b.len() != c {
                return Err(shape_err("layer_norm", x.shape(), g.shape()));
            }
            let mut out = Vec::with_capacity(r * c);
            for i in 0..r {
                let (mean, rstd) = row_stats(x.row(i), *eps);
                for j in 0..c {
                    out.push((x.row(i)[j] - mean) * rstd * g.values()[j] + b.values()[j]);
                }
            }
            Tensor::from_parts(x.shape().to_vec(), out)
        }
        Op::Gelu { a } => val(*a).map(gelu_e),
        Op::GatherRows { src, rows } => {
            let src = val(*src);
            let (r, c) = src.dims2();
            let mut out = Vec::with_capacity(rows.len() * c);
            for &i in rows.iter() {
                if i >= r {
                    return Err(Error::Shape(format!("row {i} of a {r}-row table")));
                }
                out.extend_from_slice(src.row(i));
            }
            Tensor::from_parts(vec![rows.len(), c], out)
        }
        Op::SliceBlock { a, row0, rows, col0, cols } => {
            let a = val(*a);
            let (r, c) = a.dims2();
            if row0 + rows > r || col0 + cols > c {
                return Err(Error::Shape(format!(
                    "block [{row0}+{rows}, {col0}+{cols}] of {r}x{c}"
                )));
            }
            let mut out = Vec::with_capacity(rows * cols);
            for i in *row0..row0 + rows {
                out.extend_from_slice(&a.row(i)[*col0..col0 + cols]);
            }
            Tensor::from_parts(vec![*rows, *cols], out)
        }
        Op::Assemble { parts, rows, cols } => {
            let mut out = vec![E::zero(); rows * cols];
            for &(p, r0, c0) in parts {
                let p = val(p);
                let (pr, pc) = p.dims2();
                if r0 + pr > *rows || c0 + pc > *cols {
                    return Err(Error::Shape(format!(
                        "block {pr}x{pc} at ({r0},{c0}) in {rows}x{cols}"
                    )));
                }
                for i in 0..pr {
                    let dst = &mut out[(r0 + i) * cols + c0..(r0 + i) * cols + c0 + pc];
                    for (d, &s) in dst.iter_mut().zip(p.row(i)) {
                        *d = *d + s;
                    }
                }
            }
            Tensor::from_parts(vec![*rows, *cols], out)
        }
        Op::Reshape { .. } => unreachable!("reshape is recorded with its target shape"),
        Op::CrossEntropy { logits, targets } => {
            let x = val(*logits);
            let (b, n) = x.dims2();
            if targets.len() != b || targets.iter().any(|&t| t >= n) {
                return Err(Error::Shape(format!(
                    "cross entropy over {b}x{n} logits with targets {targets:?}"
                )));
            }
            let mut total = E::zero();
            for (i, &t) in targets.iter().enumerate() {
                let row = x.row(i);
                total = total + log_sum_exp(row) - row[t];
            }
            Tensor::scalar(total / E::lit(b as f64))
        }
        Op::Sum { a } => Tensor::scalar(val(*a).sum()),
    })
}

fn row_stats<E: Element>(row: &[E], eps: E) -> (E, E) {
    let n = E::lit(row.len() as f64);
    let mean = row.iter().copied().sum::<E>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<E>() / n;
    (mean, E::one() / (var + eps).sqrt())
}

fn log_sum_exp<E: Element>(row: &[E]) -> E {
    let max = row.iter().copied().fold(E::neg_infinity(), E::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<E>().ln()
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::NotOnTape);
        }
        Ok(v.index)
    }

    fn var(&self, index: usize) -> Var {
        Var {
            tape: self.id,
            index,
        }
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor<E>) -> Var {
        self.push_leaf(value, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<E>) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor<E>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        self.var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.index].value
    }

    fn record(&mut self, op: Op<E>) -> Result<Var> {
        let nodes = &self.nodes;
        let value = match &op {
            Op::Reshape { .. } => unreachable!(),
            _ => forward(&op, |i| nodes[i].value.clone())?,
        };
        Ok(self.push(value, op))
    }

    fn push(&mut self, value: Tensor<E>, op: Op<E>) -> Var {
        let requires_grad = op.inputs().iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.var(self.nodes.len() - 1)
    }

    /// `a · b`, or `a · bᵀ` when `b_transposed`.
    pub fn matmul(&mut self, a: Var, b: Var, b_transposed: bool) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.record(Op::MatMul {
            a,
            b,
            b_t: b_transposed,
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.record(Op::Add { a, b })
    }

    /// Adds a row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (a, row) = (self.check(a)?, self.check(row)?);
        self.record(Op::AddRow { a, row })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.record(Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: Var, factor: E) -> Result<Var> {
        let a = self.check(a)?;
        self.record(Op::Scale { a, factor })
    }

    pub fn softmax_rows(&mut self, a: Var, mask: Option<Mask>) -> Result<Var> {
        let a = self.check(a)?;
        self.record(Op::SoftmaxRows { a, mask })
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: E) -> Result<Var> {
        let (x, gamma, beta) = (self.check(x)?, self.check(gamma)?, self.check(beta)?);
        self.record(Op::LayerNorm {
            x,
            gamma,
            beta,
            eps,
        })
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        self.record(Op::Gelu { a })
    }

    /// Embedding lookup: output row `i` is `src[rows[i]]`.
    pub fn gather_rows(&mut self, src: Var, rows: impl Into<Arc<[usize]>>) -> Result<Var> {
        let src = self.check(src)?;
        self.record(Op::GatherRows {
            src,
            rows: rows.into(),
        })
    }

    pub fn slice_block(
        &mut self,
        a: Var,
        row0: usize,
        rows: usize,
        col0: usize,
        cols: usize,
    ) -> Result<Var> {
        let a = self.check(a)?;
        self.record(Op::SliceBlock {
            a,
            row0,
            rows,
            col0,
            cols,
        })
    }

    /// Places rank-2 blocks into a zero `rows x cols` matrix at the given offsets.
    pub fn assemble(
        &mut self,
        parts: &[(Var, usize, usize)],
        rows: usize,
        cols: usize,
    ) -> Result<Var> {
        let parts = parts
            .iter()
            .map(|&(v, r, c)| Ok((self.check(v)?, r, c)))
            .collect::<Result<Vec<_>>>()?;
        self.record(Op::Assemble { parts, rows, cols })
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ai = self.check(a)?;
        let value = self.nodes[ai].value.reshape(shape)?;
        Ok(self.push(value, Op::Reshape { a: ai }))
    }

    /// Mean softmax cross-entropy of each logit row against its target column.
    pub fn cross_entropy(&mut self, logits: Var, targets: impl Into<Arc<[usize]>>) -> Result<Var> {
        let logits = self.check(logits)?;
        self.record(Op::CrossEntropy {
            logits,
            targets: targets.into(),
        })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        self.record(Op::Sum { a })
    }

    /// Re-evaluates every recorded operation from the leaves.
    pub fn replay(&self) -> Result<Vec<Tensor<E>>> {
        let mut values: Vec<Tensor<E>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::Reshape { a } => values[*a].reshape(node.value.shape())?,
                op => forward(op, |i| values[i].clone())?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Gradient of a single-element `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients<E>> {
        self.backward_seeded(output, E::one())
    }

    /// Like [`Tape::backward`] with `d output = seed`.
    pub fn backward_seeded(&self, output: Var, seed: E) -> Result<Gradients<E>> {
        let out = self.check(output)?;
        let len = self.nodes[out].value.len();
        if len != 1 {
            return Err(Error::NotScalar { len });
        }
        let mut grads: Vec<Option<Vec<E>>> = vec![None; self.nodes.len()];
        grads[out] = Some(vec![seed]);
        for idx in (0..=out).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|g| Tensor::from_parts(n.value.shape().to_vec(), g)))
            .collect();
        Ok(Gradients {
            tape: self.id,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
        })
    }

    fn propagate(&self, op: &Op<E>, out: &Tensor<E>, g: &[E], grads: &mut [Option<Vec<E>>]) {
        let nodes = &self.nodes;
        let wants = |i: usize| nodes[i].requires_grad;
        let v = |i: usize| &nodes[i].value;
        fn acc<E: Element>(grads: &mut [Option<Vec<E>>], i: usize, len: usize) -> &mut Vec<E> {
            grads[i].get_or_insert_with(|| vec![E::zero(); len])
        }
        match op {
            Op::Leaf => {}
            Op::Reshape { a } => {
                if wants(*a) {
                    let dst = acc(grads, *a, g.len());
                    dst.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x);
                }
            }
            Op::MatMul { a, b, b_t } => {
                let (m, k) = v(*a).dims2();
                let n = out.cols();
                if wants(*a) {
                    // dA = dC · Bᵀ   (B stored [k,n], or [n,k] when transposed)
                    let dst = acc(grads, *a, m * k);
                    E::gemm(m, n, k, g, false, v(*b).values(), !*b_t, dst, true);
                }
                if wants(*b) {
                    let bl = v(*b).len();
                    let dst = acc(grads, *b, bl);
                    if *b_t {
                        // dB[n,k] = dCᵀ · A
                        E::gemm(n, m, k, g, true, v(*a).values(), false, dst, true);
                    } else {
                        // dB[k,n] = Aᵀ · dC
                        E::gemm(k, m, n, v(*a).values(), true, g, false, dst, true);
                    }
                }
            }
            Op::Add { a, b } => {
                for &i in &[*a, *b] {
                    if wants(i) {
                        let dst = acc(grads, i, g.len());
                        dst.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x);
                    }
                }
            }
            Op::AddRow { a, row } => {
                if wants(*a) {
                    let dst = acc(grads, *a, g.len());
                    dst.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x);
                }
                if wants(*row) {
                    let c = v(*row).len();
                    let dst = acc(grads, *row, c);
                    for chunk in g.chunks(c) {
                        dst.iter_mut().zip(chunk).for_each(|(d, &x)| *d = *d + x);
                    }
                }
            }
            Op::Mul { a, b } => {
                if wants(*a) {
                    let other = v(*b).values();
                    let dst = acc(grads, *a, g.len());
                    for ((d, &x), &o) in dst.iter_mut().zip(g).zip(other) {
                        *d = *d + x * o;
                    }
                }
                if wants(*b) {
                    let other = v(*a).values();
                    let dst = acc(grads, *b, g.len());
                    for ((d, &x), &o) in dst.iter_mut().zip(g).zip(other) {
                        *d = *d + x * o;
                    }
                }
            }
            Op::Scale { a, factor } => {
                if wants(*a) {
                    let dst = acc(grads, *a, g.len());
                    dst.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x * *factor);
                }
            }
            Op::SoftmaxRows { a, .. } => {
                if wants(*a) {
                    let c = out.cols();
                    let dst = acc(grads, *a, g.len());
                    for (i, (gy, y)) in g.chunks(c).zip(out.values().chunks(c)).enumerate() {
                        let dot: E = gy.iter().zip(y).map(|(&p, &q)| p * q).sum();
                        for j in 0..c {
                            dst[i * c + j] = dst[i * c + j] + y[j] * (gy[j] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let xv = v(*x);
                let gv = v(*gamma).values().to_vec();
                let (r, c) = xv.dims2();
                let nf = E::lit(c as f64);
                let mut dgamma = vec![E::zero(); c];
                let mut dbeta = vec![E::zero(); c];
                let mut dx = vec![E::zero(); r * c];
                for i in 0..r {
                    let row = xv.row(i);
                    let (mean, rstd) = row_stats(row, *eps);
                    let gy = &g[i * c..(i + 1) * c];
                    let xhat: Vec<E> = row.iter().map(|&q| (q - mean) * rstd).collect();
                    let dxhat: Vec<E> = gy.iter().zip(&gv).map(|(&p, &w)| p * w).collect();
                    let m1 = dxhat.iter().copied().sum::<E>() / nf;
                    let m2 = dxhat.iter().zip(&xhat).map(|(&p, &q)| p * q).sum::<E>() / nf;
                    for j in 0..c {
                        dgamma[j] = dgamma[j] + gy[j] * xhat[j];
                        dbeta[j] = dbeta[j] + gy[j];
                        dx[i * c + j] = rstd * (dxhat[j] - m1 - xhat[j] * m2);
                    }
                }
                for (i, d) in [(*x, dx), (*gamma, dgamma), (*beta, dbeta)] {
                    if wants(i) {
                        let dst = acc(grads, i, d.len());
                        dst.iter_mut().zip(&d).for_each(|(p, &q)| *p = *p + q);
                    }
                }
            }
            Op::Gelu { a } => {
                if wants(*a) {
                    let xs = v(*a).values();
                    let dst = acc(grads, *a, g.len());
                    for ((d, &gy), &x) in dst.iter_mut().zip(g).zip(xs) {
                        *d = *d + gy * gelu_grad(x);
                    }
                }
            }
            Op::GatherRows { src, rows } => {
                if wants(*src) {
                    let c = v(*src).cols();
                    let dst = acc(grads, *src, v(*src).len());
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..c {
                            dst[r * c + j] = dst[r * c + j] + g[k * c + j];
                        }
                    }
                }
            }
            Op::SliceBlock {
                a,
                row0,
                rows,
                col0,
                cols,
            } => {
                if wants(*a) {
                    let ac = v(*a).cols();
                    let dst = acc(grads, *a, v(*a).len());
                    for i in 0..*rows {
                        for j in 0..*cols {
                            let d = &mut dst[(row0 + i) * ac + col0 + j];
                            *d = *d + g[i * cols + j];
                        }
                    }
                }
            }
            Op::Assemble { parts, cols, .. } => {
                for &(p, r0, c0) in parts {
                    if !wants(p) {
                        continue;
                    }
                    let (pr, pc) = v(p).dims2();
                    let dst = acc(grads, p, pr * pc);
                    for i in 0..pr {
                        for j in 0..pc {
                            dst[i * pc + j] = dst[i * pc + j] + g[(r0 + i) * cols + c0 + j];
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, targets } => {
                if wants(*logits) {
                    let x = v(*logits);
                    let (b, n) = x.dims2();
                    let scale = g[0] / E::lit(b as f64);
                    let dst = acc(grads, *logits, b * n);
                    let mut probs = vec![E::zero(); n];
                    for (i, &t) in targets.iter().enumerate() {
                        softmax_row_into(x.row(i), &mut probs, |_| true);
                        for j in 0..n {
                            let y = if j == t { E::one() } else { E::zero() };
                            dst[i * n + j] = dst[i * n + j] + scale * (probs[j] - y);
                        }
                    }
                }
            }
            Op::Sum { a } => {
                if wants(*a) {
                    let dst = acc(grads, *a, v(*a).len());
                    dst.iter_mut().for_each(|d| *d = *d + g[0]);
                }
            }
        }
    }
}

/// Result of a backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients<E: Element = f64> {
    tape: u64,
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Tensor<E>>>,
}

impl<E: Element> Gradients<E> {
    /// Gradient for `v`; zeros when nothing flowed into it.
    pub fn get(&self, v: Var) -> Tensor<E> {
        assert_eq!(v.tape, self.tape, "variable from another tape");
        self.grads[v.index]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.index]))
    }

    pub fn try_get(&self, v: Var) -> Result<Tensor<E>> {
        if v.tape != self.tape || v.index >= self.grads.len() {
            return Err(Error::NotOnTape);
        }
        Ok(self.get(v))
    }
}
