//! Tape-based reverse-mode automatic differentiation over row-major matrices.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order: every input index is smaller than its consumer's.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{self, AttnShape};
use crate::scalar::{matmul, Scalar};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Gather {
        table: Var,
        indices: Vec<usize>,
        scale: T,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    /// `x * w^T`, used for the (tied) output projection.
    MatMulT {
        x: Var,
        w: Var,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        stats: Vec<(T, T)>,
    },
    Relu(Var),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        shape: AttnShape,
        probs: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        eps: T,
        pad: usize,
        probs: Vec<T>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    rows: usize,
    cols: usize,
    value: Vec<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of a node after [`Graph::backward`]. `None` for nodes that
    /// do not require gradients: no storage is ever allocated for them.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].grad.take()
    }

    fn push(&mut self, op: Op<T>, rows: usize, cols: usize, value: Vec<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            grad: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<T>, requires_grad: bool) -> Var {
        assert_eq!(value.len(), rows * cols, "leaf value length");
        self.push(Op::Leaf, rows, cols, value, requires_grad)
    }

    pub fn scalar(&mut self, v: T, requires_grad: bool) -> Var {
        self.leaf(1, 1, vec![v], requires_grad)
    }

    /// Row lookup: `out[i] = table[indices[i]] * scale`.
    pub fn gather(&mut self, table: Var, indices: Vec<usize>, scale: T) -> Var {
        let (rows, cols) = self.shape(table);
        let mut out = Vec::with_capacity(indices.len() * cols);
        let tv = self.value(table);
        for &i in &indices {
            assert!(i < rows, "gather index {i} out of {rows}");
            out.extend(tv[i * cols..(i + 1) * cols].iter().map(|&v| v * scale));
        }
        let rg = self.requires_grad(table);
        let n = indices.len();
        self.push(Op::Gather { table, indices, scale }, n, cols, out, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let sa = self.shape(a);
        assert_eq!(sa, self.shape(b), "add shapes");
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(Op::Add(a, b), sa.0, sa.1, out, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let sa = self.shape(a);
        assert_eq!(sa, self.shape(b), "mul shapes");
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(Op::Mul(a, b), sa.0, sa.1, out, rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().fold(T::zero(), |acc, &v| acc + v);
        let rg = self.requires_grad(a);
        self.push(Op::Sum(a), 1, 1, vec![s], rg)
    }

    /// `x * w + b` with `w: din x dout` and `b: 1 x dout`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (n, din) = self.shape(x);
        let (wr, dout) = self.shape(w);
        assert_eq!(din, wr, "linear inner dims");
        if let Some(b) = b {
            assert_eq!(self.shape(b), (1, dout), "linear bias");
        }
        let mut out = vec![T::zero(); n * dout];
        kernels::linear_forward(
            self.value(x),
            n,
            din,
            self.value(w),
            dout,
            b.map(|b| self.value(b)),
            &mut out,
        );
        let rg = self.requires_grad(x) || self.requires_grad(w) || b.is_some_and(|b| self.requires_grad(b));
        self.push(Op::Linear { x, w, b }, n, dout, out, rg)
    }

    /// `x * w^T` with `w: dout x din`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let (n, din) = self.shape(x);
        let (dout, wc) = self.shape(w);
        assert_eq!(din, wc, "matmul_t inner dims");
        let mut out = vec![T::zero(); n * dout];
        matmul(n, din, dout, self.value(x), false, self.value(w), true, &mut out, false);
        let rg = self.requires_grad(x) || self.requires_grad(w);
        self.push(Op::MatMulT { x, w }, n, dout, out, rg)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Var {
        let (n, d) = self.shape(x);
        assert_eq!(self.shape(gain), (1, d), "layer norm gain");
        assert_eq!(self.shape(bias), (1, d), "layer norm bias");
        let mut out = vec![T::zero(); n * d];
        let mut stats = vec![(T::zero(), T::zero()); n];
        kernels::layer_norm_forward(
            self.value(x),
            d,
            self.value(gain),
            self.value(bias),
            eps,
            &mut out,
            Some(&mut stats),
        );
        let rg = self.requires_grad(x) || self.requires_grad(gain) || self.requires_grad(bias);
        self.push(Op::LayerNorm { x, gain, bias, stats }, n, d, out, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let (n, d) = self.shape(x);
        let out = self.value(x).iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let rg = self.requires_grad(x);
        self.push(Op::Relu(x), n, d, out, rg)
    }

    /// Multiplies elementwise by a precomputed mask (entries `0` or `1/(1-p)`).
    pub fn dropout(&mut self, x: Var, mask: Vec<T>) -> Var {
        let (n, d) = self.shape(x);
        assert_eq!(mask.len(), n * d, "dropout mask length");
        let out = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let rg = self.requires_grad(x);
        self.push(Op::Dropout { x, mask }, n, d, out, rg)
    }

    pub fn select_rows(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let (n, d) = self.shape(x);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in &rows {
            assert!(r < n, "select row {r} out of {n}");
            out.extend_from_slice(&xv[r * d..(r + 1) * d]);
        }
        let rg = self.requires_grad(x);
        let m = rows.len();
        self.push(Op::SelectRows { x, rows }, m, d, out, rg)
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, shape: AttnShape, key_pad: &[bool]) -> Var {
        assert_eq!(self.shape(q), (shape.batch * shape.q_len, shape.d_model), "attention q");
        assert_eq!(self.shape(k), (shape.batch * shape.k_len, shape.d_model), "attention k");
        assert_eq!(self.shape(v), (shape.batch * shape.k_len, shape.d_model), "attention v");
        assert_eq!(key_pad.len(), shape.batch * shape.k_len, "attention key mask");
        assert!(q != k && q != v && k != v, "attention inputs must be distinct nodes");
        let mut probs = vec![T::zero(); shape.batch * shape.heads * shape.q_len * shape.k_len];
        let mut out = vec![T::zero(); shape.batch * shape.q_len * shape.d_model];
        kernels::attention_forward(
            &shape,
            self.value(q),
            self.value(k),
            self.value(v),
            key_pad,
            &mut probs,
            &mut out,
        );
        let rg = self.requires_grad(q) || self.requires_grad(k) || self.requires_grad(v);
        self.push(
            Op::Attention { q, k, v, shape, probs },
            shape.batch * shape.q_len,
            shape.d_model,
            out,
            rg,
        )
    }

    /// Label-smoothed cross entropy averaged over positions whose target is
    /// not `pad`.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>, eps: T, pad: usize) -> Result<Var> {
        let (n, vocab) = self.shape(logits);
        if targets.len() != n {
            return Err(Error::Shape(alloc::format!("{} targets for {n} logit rows", targets.len())));
        }
        let mut probs = vec![T::zero(); n * vocab];
        let (loss, count) = cross_entropy_forward(self.value(logits), vocab, &targets, eps, pad, Some(&mut probs))?;
        let rg = self.requires_grad(logits);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                targets,
                eps,
                pad,
                probs,
                count,
            },
            1,
            1,
            vec![loss],
            rg,
        ))
    }

    /// Reverse pass from a scalar node. Only nodes with `requires_grad`
    /// receive gradient storage; intermediate gradients are released once
    /// propagated, leaf gradients are kept.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let (rows, cols) = self.shape(loss);
        if rows * cols != 1 {
            return Err(Error::NotScalar { rows, cols });
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = node.grad.take() else { continue };
            propagate(before, &node.op, node.rows, node.cols, &node.value, &g);
        }
        Ok(())
    }
}

/// Shared forward for the smoothed loss; returns `(loss, counted positions)`.
pub(crate) fn cross_entropy_forward<T: Scalar>(
    logits: &[T],
    vocab: usize,
    targets: &[usize],
    eps: T,
    pad: usize,
    mut probs: Option<&mut [T]>,
) -> Result<(T, usize)> {
    let inv_v = T::one() / T::from_usize(vocab);
    let mut total = T::zero();
    let mut count = 0usize;
    for (r, (row, &t)) in logits.chunks_exact(vocab).zip(targets).enumerate() {
        if t == pad {
            continue;
        }
        if t >= vocab {
            return Err(Error::TokenOutOfRange { token: t as u32, vocab });
        }
        let lse = kernels::log_sum_exp(row);
        let mean = row.iter().fold(T::zero(), |s, &v| s + v) * inv_v;
        let nll = lse - row[t];
        let smooth = lse - mean;
        total = total + (T::one() - eps) * nll + eps * smooth;
        count += 1;
        if let Some(p) = probs.as_deref_mut() {
            for (pv, &x) in p[r * vocab..(r + 1) * vocab].iter_mut().zip(row) {
                *pv = (x - lse).exp();
            }
        }
    }
    if count == 0 {
        return Err(Error::NoLossPositions);
    }
    Ok((total / T::from_usize(count), count))
}

fn grad_slot<T: Scalar>(nodes: &mut [Node<T>], v: Var) -> Option<Vec<T>> {
    let n = &mut nodes[v.0];
    if !n.requires_grad {
        return None;
    }
    Some(n.grad.take().unwrap_or_else(|| vec![T::zero(); n.rows * n.cols]))
}

fn put_grad<T: Scalar>(nodes: &mut [Node<T>], v: Var, g: Option<Vec<T>>) {
    if let Some(g) = g {
        nodes[v.0].grad = Some(g);
    }
}

fn accumulate<T: Scalar>(nodes: &mut [Node<T>], v: Var, delta: impl Iterator<Item = T>) {
    if let Some(mut g) = grad_slot(nodes, v) {
        g.iter_mut().zip(delta).for_each(|(a, d)| *a = *a + d);
        nodes[v.0].grad = Some(g);
    }
}

fn propagate<T: Scalar>(nodes: &mut [Node<T>], op: &Op<T>, rows: usize, cols: usize, value: &[T], g: &[T]) {
    match op {
        Op::Leaf => {}
        Op::Gather { table, indices, scale } => {
            if let Some(mut gt) = grad_slot(nodes, *table) {
                for (r, &i) in indices.iter().enumerate() {
                    let dst = &mut gt[i * cols..(i + 1) * cols];
                    for (d, &s) in dst.iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
                        *d = *d + s * *scale;
                    }
                }
                nodes[table.0].grad = Some(gt);
            }
        }
        Op::Add(a, b) => {
            accumulate(nodes, *a, g.iter().copied());
            accumulate(nodes, *b, g.iter().copied());
        }
        Op::Mul(a, b) => {
            let da: Vec<T> = g.iter().zip(&nodes[b.0].value).map(|(&x, &y)| x * y).collect();
            let db: Vec<T> = g.iter().zip(&nodes[a.0].value).map(|(&x, &y)| x * y).collect();
            accumulate(nodes, *a, da.into_iter());
            accumulate(nodes, *b, db.into_iter());
        }
        Op::Sum(a) => {
            let s = g[0];
            accumulate(nodes, *a, core::iter::repeat(s));
        }
        Op::Linear { x, w, b } => {
            let (n, dout) = (rows, cols);
            let din = nodes[x.0].cols;
            if let Some(mut gw) = grad_slot(nodes, *w) {
                matmul(din, n, dout, &nodes[x.0].value, true, g, false, &mut gw, true);
                nodes[w.0].grad = Some(gw);
            }
            if let Some(mut gx) = grad_slot(nodes, *x) {
                matmul(n, dout, din, g, false, &nodes[w.0].value, true, &mut gx, true);
                nodes[x.0].grad = Some(gx);
            }
            if let Some(b) = b {
                if let Some(mut gb) = grad_slot(nodes, *b) {
                    for row in g.chunks_exact(dout) {
                        gb.iter_mut().zip(row).for_each(|(a, &d)| *a = *a + d);
                    }
                    nodes[b.0].grad = Some(gb);
                }
            }
        }
        Op::MatMulT { x, w } => {
            let (n, dout) = (rows, cols);
            let din = nodes[x.0].cols;
            if let Some(mut gw) = grad_slot(nodes, *w) {
                matmul(dout, n, din, g, true, &nodes[x.0].value, false, &mut gw, true);
                nodes[w.0].grad = Some(gw);
            }
            if let Some(mut gx) = grad_slot(nodes, *x) {
                matmul(n, dout, din, g, false, &nodes[w.0].value, false, &mut gx, true);
                nodes[x.0].grad = Some(gx);
            }
        }
        Op::LayerNorm { x, gain, bias, stats } => {
            let mut gx = grad_slot(nodes, *x);
            let mut gg = grad_slot(nodes, *gain);
            let mut gb = grad_slot(nodes, *bias);
            kernels::layer_norm_backward(
                &nodes[x.0].value,
                cols,
                &nodes[gain.0].value,
                stats,
                g,
                gx.as_deref_mut(),
                gg.as_deref_mut(),
                gb.as_deref_mut(),
            );
            put_grad(nodes, *x, gx);
            put_grad(nodes, *gain, gg);
            put_grad(nodes, *bias, gb);
        }
        Op::Relu(x) => {
            let d: Vec<T> = g
                .iter()
                .zip(value)
                .map(|(&gv, &y)| if y > T::zero() { gv } else { T::zero() })
                .collect();
            accumulate(nodes, *x, d.into_iter());
        }
        Op::Dropout { x, mask } => {
            let d: Vec<T> = g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
            accumulate(nodes, *x, d.into_iter());
        }
        Op::SelectRows { x, rows: sel } => {
            if let Some(mut gx) = grad_slot(nodes, *x) {
                for (i, &r) in sel.iter().enumerate() {
                    let dst = &mut gx[r * cols..(r + 1) * cols];
                    dst.iter_mut()
                        .zip(&g[i * cols..(i + 1) * cols])
                        .for_each(|(a, &d)| *a = *a + d);
                }
                nodes[x.0].grad = Some(gx);
            }
        }
        Op::Attention { q, k, v, shape, probs } => {
            let mut gq = grad_slot(nodes, *q);
            let mut gk = grad_slot(nodes, *k);
            let mut gv = grad_slot(nodes, *v);
            kernels::attention_backward(
                shape,
                &nodes[q.0].value,
                &nodes[k.0].value,
                &nodes[v.0].value,
                probs,
                g,
                gq.as_deref_mut(),
                gk.as_deref_mut(),
                gv.as_deref_mut(),
            );
            put_grad(nodes, *q, gq);
            put_grad(nodes, *k, gk);
            put_grad(nodes, *v, gv);
        }
        Op::CrossEntropy {
            logits,
            targets,
            eps,
            pad,
            probs,
            count,
        } => {
            if let Some(mut gl) = grad_slot(nodes, *logits) {
                let vocab = nodes[logits.0].cols;
                let scale = g[0] / T::from_usize(*count);
                let uniform = *eps / T::from_usize(vocab);
                let keep = T::one() - *eps;
                for (r, &t) in targets.iter().enumerate() {
                    if t == *pad {
                        continue;
                    }
                    let p = &probs[r * vocab..(r + 1) * vocab];
                    let dst = &mut gl[r * vocab..(r + 1) * vocab];
                    for j in 0..vocab {
                        let mut d = p[j] - uniform;
                        if j == t {
                            d = d - keep;
                        }
                        dst[j] = dst[j] + d * scale;
                    }
                }
                nodes[logits.0].grad = Some(gl);
            }
        }
    }
}
