//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records every operation in the order it is executed, so the
//! node list is topologically sorted by construction. [`Graph::backward`]
//! walks it once in reverse and returns a [`Gradients`] table holding the
//! derivative of a scalar loss with respect to every node that needs one and
//! every parameter read from the attached [`ParamSet`].
//!
//! Parameters are not copied onto the tape: a parameter node refers to the
//! tensor in the set, and embedding lookups ([`Graph::gather`]) scatter their
//! gradient straight into the parameter's gradient row.

use super::params::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Softmax,
}

/// Clamp applied to probabilities before taking logarithms.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Gather {
        param: ParamId,
        row: usize,
    },
    MatMul(Var, Var),
    Elementwise(Elementwise, Var, Var),
    Activation(Activation, Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        input: Var,
        start: usize,
    },
    Sum(Var),
    Scale(Var, f64),
    Affine {
        terms: Vec<(Var, Var)>,
        bias: Option<Var>,
    },
    GateMix {
        gate: Var,
        prev: Var,
        cand: Var,
    },
    Bce {
        pred: Var,
        targets: Vec<f64>,
    },
    Mae {
        pred: Var,
        targets: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    // Empty for parameter nodes, whose values live in the ParamSet.
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Computation tape bound to a parameter set for the duration of one
/// forward/backward pass.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.params.get(id).values(),
            _ => &node.value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Copies a node out as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape is valid")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || shape.iter().product::<usize>() == value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a tensor; its gradient is tracked when `requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs = t.requires_grad();
        let shape = t.shape().to_vec();
        let values = t.values().to_vec();
        self.push(shape, values, Op::Leaf, needs)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        let values = t.values().to_vec();
        self.push(shape, values, Op::Leaf, false)
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.push(vec![len], vec![0.0; len], Op::Leaf, false)
    }

    /// Parameter node; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let t = self.params.get(id);
        let v = self.push(
            t.shape().to_vec(),
            Vec::new(),
            Op::Param(id),
            t.requires_grad(),
        );
        self.param_nodes[id.0] = Some(v);
        v
    }

    /// Row `row` of a 2-D parameter (embedding lookup).
    pub fn gather(&mut self, id: ParamId, row: usize) -> Result<Var> {
        let t = self.params.get(id);
        if t.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "gather",
                left: t.shape().to_vec(),
                right: vec![row],
            });
        }
        if row >= t.shape()[0] {
            return Err(Error::OutOfRange {
                what: "embedding table",
                index: row,
                size: t.shape()[0],
            });
        }
        let values = t.row(row).to_vec();
        let needs = t.requires_grad();
        Ok(self.push(
            vec![values.len()],
            values,
            Op::Gather { param: id, row },
            needs,
        ))
    }

    /// Matrix product of `[r, k]` by `[k, c]`, or matrix-vector product when
    /// `b` is one-dimensional.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ok = sa.len() == 2 && (sb.len() == 1 || sb.len() == 2) && sa[1] == sb[0];
        if !ok {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (r, k) = (sa[0], sa[1]);
        let c = if sb.len() == 2 { sb[1] } else { 1 };
        let out_shape = if sb.len() == 2 { vec![r, c] } else { vec![r] };
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; r * c];
        if c == 1 {
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(&av[i * k..(i + 1) * k], bv);
            }
        } else {
            for i in 0..r {
                let orow = &mut out[i * c..(i + 1) * c];
                for p in 0..k {
                    let aip = av[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    for (o, &bpj) in orow.iter_mut().zip(&bv[p * c..(p + 1) * c]) {
                        *o += aip * bpj;
                    }
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out_shape, out, Op::MatMul(a, b), needs))
    }

    pub fn elementwise(&mut self, op: Elementwise, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: match op {
                    Elementwise::Add => "add",
                    Elementwise::Sub => "sub",
                    Elementwise::Mul => "mul",
                },
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let (av, bv) = (self.value(a), self.value(b));
        let out: Vec<f64> = match op {
            Elementwise::Add => av.iter().zip(bv).map(|(x, y)| x + y).collect(),
            Elementwise::Sub => av.iter().zip(bv).map(|(x, y)| x - y).collect(),
            Elementwise::Mul => av.iter().zip(bv).map(|(x, y)| x * y).collect(),
        };
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(shape, out, Op::Elementwise(op, a, b), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Mul, a, b)
    }

    /// Softmax normalizes over the last axis.
    pub fn activation(&mut self, op: Activation, x: Var) -> Var {
        let xv = self.value(x);
        let out: Vec<f64> = match op {
            Activation::Sigmoid => xv.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Tanh => xv.iter().map(|&v| v.tanh()).collect(),
            Activation::Softmax => {
                let cols = *self.shape(x).last().expect("non-empty shape");
                let mut out = Vec::with_capacity(xv.len());
                for row in xv.chunks(cols) {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let start = out.len();
                    let mut total = 0.0;
                    for &v in row {
                        let e = (v - max).exp();
                        total += e;
                        out.push(e);
                    }
                    out[start..].iter_mut().for_each(|e| *e /= total);
                }
                out
            }
        };
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(shape, out, Op::Activation(op, x), needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(Activation::Tanh, x)
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        self.activation(Activation::Softmax, x)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs.first().ok_or(Error::Empty("concat inputs"))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::ShapeMismatch {
                op: "concat",
                left: base,
                right: vec![axis],
            });
        }
        let mut axis_len = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: base,
                    right: s.to_vec(),
                });
            }
            axis_len += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * axis_len * inner);
        for o in 0..outer {
            for &v in inputs {
                let block = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.value(v)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = axis_len;
        let needs = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(
            shape,
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            needs,
        ))
    }

    /// Contiguous sub-range of a one-dimensional tensor.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 1 || len == 0 || start + len > s[0] {
            return Err(Error::ShapeMismatch {
                op: "slice",
                left: s.to_vec(),
                right: vec![start, len],
            });
        }
        let out = self.value(x)[start..start + len].to_vec();
        let needs = self.needs(x);
        Ok(self.push(vec![len], out, Op::Slice { input: x, start }, needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        let needs = self.needs(x);
        self.push(vec![1], vec![total], Op::Sum(x), needs)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * factor).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(shape, out, Op::Scale(x, factor), needs)
    }

    /// `Σ_k W_k · x_k + b` for matrices `W_k: [r, n_k]` and vectors `x_k: [n_k]`.
    pub fn affine(&mut self, terms: &[(Var, Var)], bias: Option<Var>) -> Result<Var> {
        let rows = match (terms.first(), bias) {
            (Some(&(w, _)), _) => self.shape(w)[0],
            (None, Some(b)) => self.shape(b)[0],
            (None, None) => return Err(Error::Empty("affine terms")),
        };
        let mut out = match bias {
            Some(b) => {
                if self.shape(b) != [rows] {
                    return Err(Error::ShapeMismatch {
                        op: "affine",
                        left: vec![rows],
                        right: self.shape(b).to_vec(),
                    });
                }
                self.value(b).to_vec()
            }
            None => vec![0.0; rows],
        };
        for &(w, x) in terms {
            let (sw, sx) = (self.shape(w), self.shape(x));
            if sw.len() != 2 || sx.len() != 1 || sw[0] != rows || sw[1] != sx[0] {
                return Err(Error::ShapeMismatch {
                    op: "affine",
                    left: sw.to_vec(),
                    right: sx.to_vec(),
                });
            }
            let k = sw[1];
            let (wv, xv) = (self.value(w), self.value(x));
            for (i, o) in out.iter_mut().enumerate() {
                *o += dot(&wv[i * k..(i + 1) * k], xv);
            }
        }
        let needs = terms.iter().any(|&(w, x)| self.needs(w) || self.needs(x))
            || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            vec![rows],
            out,
            Op::Affine {
                terms: terms.to_vec(),
                bias,
            },
            needs,
        ))
    }

    /// `(1 − gate) ⊗ prev + gate ⊗ cand`, the GRU state interpolation.
    pub fn gate_mix(&mut self, gate: Var, prev: Var, cand: Var) -> Result<Var> {
        for v in [prev, cand] {
            if self.shape(v) != self.shape(gate) {
                return Err(Error::ShapeMismatch {
                    op: "gate_mix",
                    left: self.shape(gate).to_vec(),
                    right: self.shape(v).to_vec(),
                });
            }
        }
        let (g, p, c) = (self.value(gate), self.value(prev), self.value(cand));
        let out = (0..g.len())
            .map(|i| (1.0 - g[i]) * p[i] + g[i] * c[i])
            .collect();
        let shape = self.shape(gate).to_vec();
        let needs = self.needs(gate) || self.needs(prev) || self.needs(cand);
        Ok(self.push(shape, out, Op::GateMix { gate, prev, cand }, needs))
    }

    /// Mean binary cross-entropy of probabilities `pred` against 0/1 targets.
    pub fn bce_loss(&mut self, pred: Var, targets: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "bce_loss",
                left: self.shape(pred).to_vec(),
                right: vec![targets.len()],
            });
        }
        let n = p.len() as f64;
        let total: f64 = p
            .iter()
            .zip(targets)
            .map(|(&p, &t)| {
                let c = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
                -(t * c.ln() + (1.0 - t) * (1.0 - c).ln())
            })
            .sum();
        let needs = self.needs(pred);
        Ok(self.push(
            vec![1],
            vec![total / n],
            Op::Bce {
                pred,
                targets: targets.to_vec(),
            },
            needs,
        ))
    }

    /// Mean absolute error; the subgradient at equality is 0.
    pub fn mae_loss(&mut self, pred: Var, targets: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "mae_loss",
                left: self.shape(pred).to_vec(),
                right: vec![targets.len()],
            });
        }
        let total: f64 = p.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
        let value = total / p.len() as f64;
        let needs = self.needs(pred);
        Ok(self.push(
            vec![1],
            vec![value],
            Op::Mae {
                pred,
                targets: targets.to_vec(),
            },
            needs,
        ))
    }

    /// Propagates d(loss)/d(node) back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != [1] {
            return Err(Error::NotScalar(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut param_grads: Vec<Option<Vec<f64>>> = vec![None; self.params.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    add_into(param_slot(&mut param_grads, self.params, *id), &gy);
                }
                Op::Gather { param, row } => {
                    let cols = gy.len();
                    let slot = param_slot(&mut param_grads, self.params, *param);
                    add_into(&mut slot[row * cols..(row + 1) * cols], &gy);
                }
                Op::MatMul(a, b) => {
                    let (sa, sb) = (self.shape(*a), self.shape(*b));
                    let (r, k) = (sa[0], sa[1]);
                    let c = if sb.len() == 2 { sb[1] } else { 1 };
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        // dA = dY · Bᵀ
                        let ga = grad_slot(&mut grads, &self.nodes, *a);
                        for i in 0..r {
                            let gyi = &gy[i * c..(i + 1) * c];
                            for p in 0..k {
                                ga[i * k + p] += dot(gyi, &bv[p * c..(p + 1) * c]);
                            }
                        }
                    }
                    if self.needs(*b) {
                        // dB = Aᵀ · dY
                        let gb = grad_slot(&mut grads, &self.nodes, *b);
                        for i in 0..r {
                            let gyi = &gy[i * c..(i + 1) * c];
                            for p in 0..k {
                                let aip = av[i * k + p];
                                for (g, &y) in gb[p * c..(p + 1) * c].iter_mut().zip(gyi) {
                                    *g += aip * y;
                                }
                            }
                        }
                    }
                }
                Op::Elementwise(op, a, b) => {
                    let (a, b, op) = (*a, *b, *op);
                    if self.needs(a) {
                        let ga = grad_slot(&mut grads, &self.nodes, a);
                        match op {
                            Elementwise::Add | Elementwise::Sub => add_into(ga, &gy),
                            Elementwise::Mul => {
                                for ((g, &y), &bv) in ga.iter_mut().zip(&gy).zip(self.value(b)) {
                                    *g += y * bv;
                                }
                            }
                        }
                    }
                    if self.needs(b) {
                        let gb = grad_slot(&mut grads, &self.nodes, b);
                        match op {
                            Elementwise::Add => add_into(gb, &gy),
                            Elementwise::Sub => {
                                gb.iter_mut().zip(&gy).for_each(|(g, y)| *g -= y);
                            }
                            Elementwise::Mul => {
                                for ((g, &y), &av) in gb.iter_mut().zip(&gy).zip(self.value(a)) {
                                    *g += y * av;
                                }
                            }
                        }
                    }
                }
                Op::Activation(op, x) => {
                    let y = &node.value;
                    let gx = grad_slot(&mut grads, &self.nodes, *x);
                    match op {
                        Activation::Sigmoid => {
                            for ((g, &d), &s) in gx.iter_mut().zip(&gy).zip(y) {
                                *g += d * s * (1.0 - s);
                            }
                        }
                        Activation::Tanh => {
                            for ((g, &d), &t) in gx.iter_mut().zip(&gy).zip(y) {
                                *g += d * (1.0 - t * t);
                            }
                        }
                        Activation::Softmax => {
                            let cols = *node.shape.last().expect("non-empty shape");
                            for ((gr, dr), yr) in
                                gx.chunks_mut(cols).zip(gy.chunks(cols)).zip(y.chunks(cols))
                            {
                                let inner = dot(dr, yr);
                                for ((g, &d), &s) in gr.iter_mut().zip(dr).zip(yr) {
                                    *g += s * (d - inner);
                                }
                            }
                        }
                    }
                }
                Op::Concat { inputs, axis } => {
                    let shape = &node.shape;
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[axis + 1..].iter().product();
                    let row = shape[*axis] * inner;
                    let mut offset = 0;
                    for &v in inputs {
                        let block = self.shape(v)[*axis] * inner;
                        if self.needs(v) {
                            let gv = grad_slot(&mut grads, &self.nodes, v);
                            for o in 0..outer {
                                add_into(
                                    &mut gv[o * block..(o + 1) * block],
                                    &gy[o * row + offset..o * row + offset + block],
                                );
                            }
                        }
                        offset += block;
                    }
                }
                Op::Slice { input, start } => {
                    let gx = grad_slot(&mut grads, &self.nodes, *input);
                    add_into(&mut gx[*start..*start + gy.len()], &gy);
                }
                Op::Sum(x) => {
                    let gx = grad_slot(&mut grads, &self.nodes, *x);
                    gx.iter_mut().for_each(|g| *g += gy[0]);
                }
                Op::Scale(x, factor) => {
                    let gx = grad_slot(&mut grads, &self.nodes, *x);
                    for (g, &d) in gx.iter_mut().zip(&gy) {
                        *g += d * factor;
                    }
                }
                Op::Affine { terms, bias } => {
                    for &(w, x) in terms {
                        let k = self.shape(w)[1];
                        if self.needs(w) {
                            let xv = self.value(x);
                            let gw = grad_slot(&mut grads, &self.nodes, w);
                            for (i, &d) in gy.iter().enumerate() {
                                if d == 0.0 {
                                    continue;
                                }
                                for (g, &xp) in gw[i * k..(i + 1) * k].iter_mut().zip(xv) {
                                    *g += d * xp;
                                }
                            }
                        }
                        if self.needs(x) {
                            let wv = self.value(w);
                            let gx = grad_slot(&mut grads, &self.nodes, x);
                            for (i, &d) in gy.iter().enumerate() {
                                if d == 0.0 {
                                    continue;
                                }
                                for (g, &wp) in gx.iter_mut().zip(&wv[i * k..(i + 1) * k]) {
                                    *g += d * wp;
                                }
                            }
                        }
                    }
                    if let Some(b) = bias {
                        if self.needs(*b) {
                            add_into(grad_slot(&mut grads, &self.nodes, *b), &gy);
                        }
                    }
                }
                Op::GateMix { gate, prev, cand } => {
                    let (gv, pv, cv) = (self.value(*gate), self.value(*prev), self.value(*cand));
                    if self.needs(*gate) {
                        let gg = grad_slot(&mut grads, &self.nodes, *gate);
                        for i in 0..gy.len() {
                            gg[i] += gy[i] * (cv[i] - pv[i]);
                        }
                    }
                    if self.needs(*prev) {
                        let gp = grad_slot(&mut grads, &self.nodes, *prev);
                        for i in 0..gy.len() {
                            gp[i] += gy[i] * (1.0 - gv[i]);
                        }
                    }
                    if self.needs(*cand) {
                        let gc = grad_slot(&mut grads, &self.nodes, *cand);
                        for i in 0..gy.len() {
                            gc[i] += gy[i] * gv[i];
                        }
                    }
                }
                Op::Bce { pred, targets } => {
                    let p = self.value(*pred);
                    let n = p.len() as f64;
                    let gp = grad_slot(&mut grads, &self.nodes, *pred);
                    for ((g, &p), &t) in gp.iter_mut().zip(p).zip(targets) {
                        if p > BCE_EPSILON && p < 1.0 - BCE_EPSILON {
                            *g += gy[0] * (-t / p + (1.0 - t) / (1.0 - p)) / n;
                        }
                    }
                }
                Op::Mae { pred, targets } => {
                    let p = self.value(*pred);
                    let n = p.len() as f64;
                    let gp = grad_slot(&mut grads, &self.nodes, *pred);
                    for ((g, &p), &t) in gp.iter_mut().zip(p).zip(targets) {
                        let sign = if p > t {
                            1.0
                        } else if p < t {
                            -1.0
                        } else {
                            0.0
                        };
                        *g += gy[0] * sign / n;
                    }
                }
            }
            grads[idx] = Some(gy);
        }

        Ok(Gradients {
            nodes: grads,
            params: param_grads,
        })
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to a node; `None` when nothing flowed into it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params.get(id.0).and_then(|g| g.as_deref())
    }
}

fn grad_slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut [f64] {
    let len = nodes[v.0].shape.iter().product();
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn param_slot<'a>(
    grads: &'a mut [Option<Vec<f64>>],
    params: &ParamSet,
    id: ParamId,
) -> &'a mut [f64] {
    grads[id.0].get_or_insert_with(|| vec![0.0; params.get(id).len()])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
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
