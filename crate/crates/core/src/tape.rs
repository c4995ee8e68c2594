//! A small eager reverse-mode tape over dense matrices.
//!
//! Each operation evaluates immediately and records what backward needs.
//! Nodes built only from constants never receive gradients, so frozen
//! weights cost nothing on the backward pass.

use crate::ao::{self, GeneratorVector};
use crate::error::{invalid, AoftError, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Matrix};

/// Variance floor inside layer normalization.
pub const LN_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    MulCols(Var, Var),
    MulConst(Var, Matrix),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        seq: usize,
        heads: usize,
        probs: Vec<Matrix>,
    },
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Ao {
        q: Var,
        d: usize,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Matrix,
    },
    InnerConst(Var, Matrix),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros of the given shape when none flowed back.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

fn mismatch(op: &'static str, a: &Matrix, b: &Matrix) -> AoftError {
    AoftError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
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

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// A trainable leaf.
    pub fn param(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(value, Op::Transpose(a), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    /// `a + 1·row`, broadcasting a `1×cols` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (am, rm) = (self.value(a), self.value(row));
        if rm.rows() != 1 || rm.cols() != am.cols() {
            return Err(mismatch("add_row", am, rm));
        }
        let mut value = am.clone();
        for i in 0..value.rows() {
            for (v, r) in value.row_mut(i).iter_mut().zip(rm.data()) {
                *v += r;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(value, Op::AddRow(a, row), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, c), ng)
    }

    /// `a · s` for a `1×1` node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let sm = self.value(s);
        if sm.shape() != (1, 1) {
            return Err(mismatch("scale_by", self.value(a), sm));
        }
        let value = self.value(a).scale(sm.get(0, 0));
        let ng = self.ng(a) || self.ng(s);
        Ok(self.push(value, Op::ScaleBy(a, s), ng))
    }

    /// Scales column `j` of `a` by `v[j]` for a `1×cols` node `v`.
    pub fn mul_cols(&mut self, a: Var, v: Var) -> Result<Var> {
        let (am, vm) = (self.value(a), self.value(v));
        if vm.rows() != 1 || vm.cols() != am.cols() {
            return Err(mismatch("mul_cols", am, vm));
        }
        let mut value = am.clone();
        for i in 0..value.rows() {
            for (x, s) in value.row_mut(i).iter_mut().zip(vm.data()) {
                *x *= s;
            }
        }
        let ng = self.ng(a) || self.ng(v);
        Ok(self.push(value, Op::MulCols(a, v), ng))
    }

    /// Elementwise product with a constant mask.
    pub fn mul_const(&mut self, a: Var, mask: Matrix) -> Result<Var> {
        let value = self.value(a).hadamard(&mask)?;
        let ng = self.ng(a);
        Ok(self.push(value, Op::MulConst(a, mask), ng))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(gelu);
        let ng = self.ng(a);
        self.push(value, Op::Gelu(a), ng)
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` (both `1×cols`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xm = self.value(x);
        let cols = xm.cols();
        for p in [gamma, beta] {
            let pm = self.value(p);
            if pm.shape() != (1, cols) {
                return Err(mismatch("layer_norm", xm, pm));
            }
        }
        let mut xhat = xm.clone();
        let mut inv_std = Vec::with_capacity(xm.rows());
        for i in 0..xhat.rows() {
            let row = xhat.row_mut(i);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut value = xhat.clone();
        for i in 0..value.rows() {
            for ((v, gj), bj) in value.row_mut(i).iter_mut().zip(g).zip(b) {
                *v = *v * gj + bj;
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// Multi-head scaled dot-product attention over a batch of sequences.
    ///
    /// `q`, `k`, `v` are `(batch·seq)×D`; rows `[b·seq, (b+1)·seq)` belong to
    /// sample `b`, and head `h` owns columns `[h·D/heads, (h+1)·D/heads)`.
    /// Output heads are concatenated back along the columns.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, seq: usize, heads: usize) -> Result<Var> {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        if qm.shape() != km.shape() || qm.shape() != vm.shape() {
            return Err(mismatch("attention", qm, km));
        }
        let (rows, dim) = qm.shape();
        if seq == 0 || rows % seq != 0 || heads == 0 || dim % heads != 0 {
            return Err(invalid(format!(
                "attention: {rows}x{dim} input does not split into sequences of {seq} and {heads} heads"
            )));
        }
        let dh = dim / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let batch = rows / seq;
        let mut out = Matrix::zeros(rows, dim);
        let mut probs = Vec::with_capacity(batch * heads);
        for b in 0..batch {
            for h in 0..heads {
                let qh = block(qm, b * seq, seq, h * dh, dh);
                let kh = block(km, b * seq, seq, h * dh, dh);
                let vh = block(vm, b * seq, seq, h * dh, dh);
                let scores = matmul_nt(&qh, &kh)?.scale(scale);
                let p = softmax_rows(&scores);
                let oh = matmul(&p, &vh)?;
                put_block(&mut out, &oh, b * seq, h * dh);
                probs.push(p);
            }
        }
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                seq,
                heads,
                probs,
            },
            ng,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| invalid("concat_rows of nothing"))?;
        let mut value = self.value(*first).clone();
        for p in &parts[1..] {
            value = value.vstack(self.value(*p))?;
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Result<Var> {
        let am = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= am.rows()) {
            return Err(invalid(format!(
                "gather_rows: row {bad} out of range for {} rows",
                am.rows()
            )));
        }
        let cols = am.cols();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in &rows {
            data.extend_from_slice(am.row(r));
        }
        let value = Matrix::new(rows.len(), cols, data)?;
        let ng = self.ng(a);
        Ok(self.push(value, Op::GatherRows(a, rows), ng))
    }

    /// `AO(q)` for a `1×N` generator node.
    pub fn ao(&mut self, q: Var, d: usize) -> Result<Var> {
        let g = GeneratorVector::new(self.value(q).data().to_vec())?;
        let value = ao::ao_slab(&g, d)?;
        let ng = self.ng(q);
        Ok(self.push(value, Op::Ao { q, d }, ng))
    }

    /// Mean softmax cross-entropy of `logits` (`batch×classes`) against labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lm = self.value(logits);
        if lm.rows() != labels.len() || lm.rows() == 0 {
            return Err(invalid(format!(
                "cross_entropy: {} logit rows for {} labels",
                lm.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= lm.cols()) {
            return Err(invalid(format!("label {bad} out of range for {} classes", lm.cols())));
        }
        let probs = softmax_rows(lm);
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -probs.get(i, l).max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / labels.len() as f64;
        let ng = self.ng(logits);
        Ok(self.push(
            Matrix::row_vector(&[loss]),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// `Σ a ⊙ c` as a `1×1` node.
    pub fn inner_const(&mut self, a: Var, c: Matrix) -> Result<Var> {
        let am = self.value(a);
        if am.shape() != c.shape() {
            return Err(mismatch("inner_const", am, &c));
        }
        let s: f64 = am.data().iter().zip(c.data()).map(|(x, y)| x * y).sum();
        let ng = self.ng(a);
        Ok(self.push(Matrix::row_vector(&[s]), Op::InnerConst(a, c), ng))
    }

    /// Back-propagates from a `1×1` root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rm = self.value(root);
        if rm.shape() != (1, 1) {
            return Err(invalid(format!(
                "backward needs a scalar root, got {:?}",
                rm.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Matrix::row_vector(&[1.0]));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let mut acc = |v: Var, contrib: Matrix| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    acc(*a, matmul_nt(g, self.value(*b))?);
                }
                if self.ng(*b) {
                    acc(*b, matmul_tn(self.value(*a), g)?);
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                if self.ng(*row) {
                    acc(*row, column_sums(g));
                }
            }
            Op::Scale(a, c) => acc(*a, g.scale(*c)),
            Op::ScaleBy(a, s) => {
                let sv = self.value(*s).get(0, 0);
                if self.ng(*a) {
                    acc(*a, g.scale(sv));
                }
                if self.ng(*s) {
                    let d: f64 = g.data().iter().zip(self.value(*a).data()).map(|(x, y)| x * y).sum();
                    acc(*s, Matrix::row_vector(&[d]));
                }
            }
            Op::MulCols(a, v) => {
                let am = self.value(*a);
                let vm = self.value(*v);
                if self.ng(*a) {
                    let mut ga = g.clone();
                    for i in 0..ga.rows() {
                        for (x, s) in ga.row_mut(i).iter_mut().zip(vm.data()) {
                            *x *= s;
                        }
                    }
                    acc(*a, ga);
                }
                if self.ng(*v) {
                    acc(*v, column_sums(&g.zip_map(am, |x, y| x * y)));
                }
            }
            Op::MulConst(a, mask) => acc(*a, g.zip_map(mask, |x, m| x * m)),
            Op::Gelu(a) => {
                let x = self.value(*a);
                acc(*a, g.zip_map(x, |gi, xi| gi * gelu_grad(xi)));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gm = self.value(*gamma);
                if self.ng(*gamma) {
                    acc(*gamma, column_sums(&g.zip_map(xhat, |a, b| a * b)));
                }
                if self.ng(*beta) {
                    acc(*beta, column_sums(g));
                }
                if self.ng(*x) {
                    let cols = g.cols() as f64;
                    let mut gx = Matrix::zeros(g.rows(), g.cols());
                    for i in 0..g.rows() {
                        let gr = g.row(i);
                        let xr = xhat.row(i);
                        let dxhat: Vec<f64> = gr.iter().zip(gm.data()).map(|(a, b)| a * b).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / cols;
                        let mean_dx =
                            dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / cols;
                        for ((o, dh), xh) in gx.row_mut(i).iter_mut().zip(&dxhat).zip(xr) {
                            *o = inv_std[i] * (dh - mean_d - xh * mean_dx);
                        }
                    }
                    acc(*x, gx);
                }
            }
            Op::Attention {
                q,
                k,
                v,
                seq,
                heads,
                probs,
            } => {
                let (qm, km, vm) = (self.value(*q), self.value(*k), self.value(*v));
                let (rows, dim) = qm.shape();
                let dh = dim / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let batch = rows / seq;
                let mut gq = Matrix::zeros(rows, dim);
                let mut gk = Matrix::zeros(rows, dim);
                let mut gv = Matrix::zeros(rows, dim);
                for b in 0..batch {
                    for h in 0..*heads {
                        let p = &probs[b * heads + h];
                        let go = block(g, b * seq, *seq, h * dh, dh);
                        let qh = block(qm, b * seq, *seq, h * dh, dh);
                        let kh = block(km, b * seq, *seq, h * dh, dh);
                        let vh = block(vm, b * seq, *seq, h * dh, dh);
                        put_block(&mut gv, &matmul_tn(p, &go)?, b * seq, h * dh);
                        let dp = matmul_nt(&go, &vh)?;
                        let mut ds = Matrix::zeros(*seq, *seq);
                        for i in 0..*seq {
                            let pr = p.row(i);
                            let dr = dp.row(i);
                            let inner: f64 = pr.iter().zip(dr).map(|(a, b)| a * b).sum();
                            for ((o, pi), di) in ds.row_mut(i).iter_mut().zip(pr).zip(dr) {
                                *o = pi * (di - inner) * scale;
                            }
                        }
                        put_block(&mut gq, &matmul(&ds, &kh)?, b * seq, h * dh);
                        put_block(&mut gk, &matmul_tn(&ds, &qh)?, b * seq, h * dh);
                    }
                }
                acc(*q, gq);
                acc(*k, gk);
                acc(*v, gv);
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let n = self.value(*p).rows();
                    if self.ng(*p) {
                        acc(*p, block(g, start, n, 0, g.cols()));
                    }
                    start += n;
                }
            }
            Op::GatherRows(a, rows) => {
                let am = self.value(*a);
                let mut ga = Matrix::zeros(am.rows(), am.cols());
                for (i, &r) in rows.iter().enumerate() {
                    for (o, x) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
                acc(*a, ga);
            }
            Op::Ao { q, d } => {
                let gen = GeneratorVector::new(self.value(*q).data().to_vec())?;
                let gq = ao::grad_q(&gen, *d, g)?;
                acc(*q, Matrix::row_vector(gq.as_slice()));
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let scale = g.get(0, 0) / labels.len() as f64;
                let mut gl = probs.clone();
                for (i, &l) in labels.iter().enumerate() {
                    let v = gl.get(i, l);
                    gl.set(i, l, v - 1.0);
                }
                acc(*logits, gl.scale(scale));
            }
            Op::InnerConst(a, c) => acc(*a, c.scale(g.get(0, 0))),
        }
        Ok(())
    }
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(i)) {
            *o += v;
        }
    }
    Matrix::row_vector(&out)
}

fn block(m: &Matrix, r0: usize, nr: usize, c0: usize, nc: usize) -> Matrix {
    let mut data = Vec::with_capacity(nr * nc);
    for i in r0..r0 + nr {
        data.extend_from_slice(&m.row(i)[c0..c0 + nc]);
    }
    Matrix::new(nr, nc, data).expect("block of a finite matrix")
}

fn put_block(dst: &mut Matrix, src: &Matrix, r0: usize, c0: usize) {
    for i in 0..src.rows() {
        dst.row_mut(r0 + i)[c0..c0 + src.cols()].copy_from_slice(src.row(i));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = seed ^ 0x9E37_79B9_7F4A_7C15;
        Matrix::from_fn(rows, cols, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
    }

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric_grad(x: &Matrix, f: &dyn Fn(&Matrix) -> f64) -> Matrix {
        let h = 1e-6;
        let mut g = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let mut p = x.clone();
                p.set(i, j, x.get(i, j) + h);
                let mut m = x.clone();
                m.set(i, j, x.get(i, j) - h);
                g.set(i, j, (f(&p) - f(&m)) / (2.0 * h));
            }
        }
        g
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        a.max_abs_diff(b) / (1.0 + b.max_abs())
    }

    /// Checks d⟨C, build(x)⟩/dx against central differences.
    fn check(x: Matrix, build: impl Fn(&mut Tape, Var) -> Var, seed: u64) {
        let mut tape = Tape::new();
        let xv = tape.param(x.clone());
        let out = build(&mut tape, xv);
        let c = rand_matrix(tape.value(out).rows(), tape.value(out).cols(), seed);
        let loss = tape.inner_const(out, c.clone()).unwrap();
        let analytic = tape.backward(loss).unwrap().get(xv).unwrap().clone();
        let f = |m: &Matrix| {
            let mut t = Tape::new();
            let v = t.constant(m.clone());
            let o = build(&mut t, v);
            let l = t.inner_const(o, c.clone()).unwrap();
            t.value(l).get(0, 0)
        };
        let numeric = numeric_grad(&x, &f);
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-7, "relative error {e}");
    }

    #[test]
    fn matmul_and_transpose_grads() {
        let w = rand_matrix(4, 3, 1);
        check(rand_matrix(5, 4, 2), |t, x| {
            let wv = t.constant(w.clone());
            let y = t.matmul(x, wv).unwrap();
            t.transpose(y)
        }, 3);
    }

    #[test]
    fn layer_norm_grads() {
        let gamma = rand_matrix(1, 6, 4);
        let beta = rand_matrix(1, 6, 5);
        check(rand_matrix(3, 6, 6), |t, x| {
            let g = t.constant(gamma.clone());
            let b = t.constant(beta.clone());
            t.layer_norm(x, g, b).unwrap()
        }, 7);
        let x = rand_matrix(3, 6, 8);
        check(gamma.clone(), |t, g| {
            let xv = t.constant(x.clone());
            let b = t.constant(beta.clone());
            t.layer_norm(xv, g, b).unwrap()
        }, 9);
    }

    #[test]
    fn attention_grads() {
        let k = rand_matrix(6, 4, 10);
        let v = rand_matrix(6, 4, 11);
        check(rand_matrix(6, 4, 12), |t, q| {
            let kv = t.constant(k.clone());
            let vv = t.constant(v.clone());
            t.attention(q, kv, vv, 3, 2).unwrap()
        }, 13);
        let q = rand_matrix(6, 4, 14);
        check(k.clone(), |t, kk| {
            let qv = t.constant(q.clone());
            let vv = t.constant(v.clone());
            t.attention(qv, kk, vv, 3, 2).unwrap()
        }, 15);
        check(v.clone(), |t, vv| {
            let qv = t.constant(q.clone());
            let kv = t.constant(k.clone());
            t.attention(qv, kv, vv, 3, 2).unwrap()
        }, 16);
    }

    #[test]
    fn elementwise_and_structural_grads() {
        check(rand_matrix(3, 5, 17), |t, x| t.gelu(x), 18);
        let v = rand_matrix(1, 5, 19);
        check(rand_matrix(3, 5, 20), |t, x| {
            let vv = t.constant(v.clone());
            t.mul_cols(x, vv).unwrap()
        }, 21);
        let a = rand_matrix(3, 5, 22);
        check(v.clone(), |t, vv| {
            let av = t.constant(a.clone());
            t.mul_cols(av, vv).unwrap()
        }, 23);
        check(v.clone(), |t, vv| {
            let av = t.constant(a.clone());
            t.add_row(av, vv).unwrap()
        }, 24);
        check(rand_matrix(4, 3, 25), |t, x| {
            let other = t.constant(Matrix::zeros(2, 3));
            let c = t.concat_rows(&[other, x, x]).unwrap();
            t.gather_rows(c, vec![0, 3, 3, 7]).unwrap()
        }, 26);
        check(Matrix::row_vector(&[0.7]), |t, s| {
            let av = t.constant(a.clone());
            t.scale_by(av, s).unwrap()
        }, 27);
    }

    #[test]
    fn cross_entropy_grads() {
        let labels = [2usize, 0, 1];
        check(rand_matrix(3, 4, 28), |t, x| t.cross_entropy(x, &labels).unwrap(), 29);
    }

    #[test]
    fn ao_node_grads() {
        let q = Matrix::row_vector(&[0.9, 0.2, -0.3, 0.1, 0.25]);
        check(q, |t, qv| t.ao(qv, 3).unwrap(), 30);
    }

    #[test]
    fn constants_do_not_receive_gradients() {
        let mut t = Tape::new();
        let a = t.constant(rand_matrix(2, 2, 31));
        let b = t.param(rand_matrix(2, 2, 32));
        let c = t.matmul(a, b).unwrap();
        let l = t.inner_const(c, Matrix::identity(2)).unwrap();
        let g = t.backward(l).unwrap();
        assert!(g.get(a).is_none());
        assert!(g.get(b).is_some());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let m = rand_matrix(5, 7, 33).scale(30.0);
        let p = softmax_rows(&m);
        for i in 0..5 {
            let s: f64 = p.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut t = Tape::new();
        let a = t.param(Matrix::zeros(2, 2));
        assert!(t.backward(a).is_err());
    }
}
