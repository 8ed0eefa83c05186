//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] is built fresh for every forward pass. Ops append nodes holding
//! their forward value plus whatever context the backward rule needs; a
//! backward sweep in reverse insertion order then yields exact gradients for
//! every parameter the loss touched.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::TensorError;
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{log_sum_exp, mm_nn, mm_nt, mm_tn, sigmoid, softplus, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

type OpResult = Result<Var, TensorError>;

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var),
    LogSumExp(Var),
    LayerNorm(Var, Vec<f64>),
    Dropout(Var, Vec<f64>),
    SelectRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    MaxPoolRows(Var, Vec<usize>),
    ElemMax(Vec<Var>, Vec<usize>),
    MeanRows(Var),
    Transpose(Var),
    SumAll(Var),
    // Scalar-output losses cache d(loss)/d(input) at forward time.
    BceWithLogits(Var, Vec<f64>),
    CrfNll { emissions: Var, transitions: Var, d_emissions: Vec<f64>, d_transitions: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulNT(..) => "matmul_nt",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Softmax(_) => "softmax",
            Op::LogSumExp(_) => "log_sum_exp",
            Op::LayerNorm(..) => "layer_norm",
            Op::Dropout(..) => "dropout",
            Op::SelectRows(..) => "select_rows",
            Op::ConcatRows(_) => "concat_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::MaxPoolRows(..) => "max_pool_rows",
            Op::ElemMax(..) => "elementwise_max",
            Op::MeanRows(_) => "mean_rows",
            Op::Transpose(_) => "transpose",
            Op::SumAll(_) => "sum",
            Op::BceWithLogits(..) => "bce_with_logits",
            Op::CrfNll { .. } => "crf_nll",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// One forward pass worth of recorded computation.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    train: bool,
    rng: ChaCha8Rng,
    check_finite: bool,
    first_non_finite: Option<&'static str>,
}

impl<'s> Tape<'s> {
    /// Inference tape: dropout is the identity.
    pub fn eval(store: &'s ParamStore) -> Self {
        Self::build(store, false, 0)
    }

    /// Training tape: dropout masks are drawn from a generator seeded with `seed`.
    pub fn train(store: &'s ParamStore, seed: u64) -> Self {
        Self::build(store, true, seed)
    }

    fn build(store: &'s ParamStore, train: bool, seed: u64) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(1024),
            param_vars: vec![None; store.len()],
            train,
            rng: ChaCha8Rng::seed_from_u64(seed),
            check_finite: false,
            first_non_finite: None,
        }
    }

    /// Records the first op whose output contains NaN or infinity.
    pub fn with_finite_check(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.first_non_finite
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Op names in recording order, for wiring diagnostics.
    pub fn trace(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims2()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        if self.check_finite && self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some(op.name());
        }
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push_unary(&mut self, x: Var, value: Tensor, op: Op) -> Var {
        let needs = self.needs(x);
        self.push(value, op, needs)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Const, false)
    }

    /// Binds a parameter. Repeated binds within one tape share a node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let value = self.store.value(id).clone();
        let v = self.push(value, Op::Param(id), true);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> OpResult {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(TensorError::mismatch("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        mm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), needs))
    }

    /// `a . b^T`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> OpResult {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(TensorError::mismatch("matmul_nt", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        mm_nt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulNT(a, b), needs))
    }

    fn broadcast_check(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize, bool), TensorError> {
        let (ra, ca) = self.dims(a);
        let (rb, cb) = self.dims(b);
        if ca != cb || !(ra == rb || rb == 1) {
            return Err(TensorError::mismatch(op, self.shape(a), self.shape(b)));
        }
        Ok((ra, ca, rb == 1 && ra != 1))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, TensorError> {
        let (r, c, _) = self.broadcast_check(op, a, b)?;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let bc = bv.len();
        let out = av.iter().enumerate().map(|(i, &x)| f(x, bv[i % bc])).collect();
        Tensor::matrix(r, c, out)
    }

    /// Elementwise `a + b`; `b` may be a single row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> OpResult {
        let t = self.binary("add", a, b, |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> OpResult {
        let t = self.binary("sub", a, b, |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Sub(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> OpResult {
        let t = self.binary("mul", a, b, |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> OpResult {
        let t = self.value(a).map(|x| x * factor);
        Ok(self.push_unary(a, t, Op::Scale(a, factor)))
    }

    pub fn sigmoid(&mut self, a: Var) -> OpResult {
        let t = self.value(a).map(sigmoid);
        Ok(self.push_unary(a, t, Op::Sigmoid(a)))
    }

    pub fn relu(&mut self, a: Var) -> OpResult {
        let t = self.value(a).map(|x| x.max(0.0));
        Ok(self.push_unary(a, t, Op::Relu(a)))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> OpResult {
        let (r, c) = self.dims(a);
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        let t = Tensor::matrix(r, c, out)?;
        Ok(self.push_unary(a, t, Op::Softmax(a)))
    }

    /// Row-wise log-sum-exp, giving an `r x 1` column.
    pub fn log_sum_exp(&mut self, a: Var) -> OpResult {
        let (r, c) = self.dims(a);
        if c == 0 {
            return Err(TensorError::Invalid { op: "log_sum_exp", msg: "empty rows".into() });
        }
        let out = self.value(a).data().chunks(c).map(log_sum_exp).collect();
        let t = Tensor::matrix(r, 1, out)?;
        Ok(self.push_unary(a, t, Op::LogSumExp(a)))
    }

    /// Row-wise normalization to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, a: Var) -> OpResult {
        let (r, c) = self.dims(a);
        let mut out = self.value(a).data().to_vec();
        let mut inv_std = Vec::with_capacity(r);
        for row in out.chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let t = Tensor::matrix(r, c, out)?;
        Ok(self.push_unary(a, t, Op::LayerNorm(a, inv_std)))
    }

    /// Inverted dropout. The identity on an eval tape or when `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64) -> OpResult {
        if !self.train || rate <= 0.0 {
            return Ok(a);
        }
        if rate >= 1.0 {
            return Err(TensorError::Invalid { op: "dropout", msg: format!("rate {rate} must be < 1") });
        }
        let keep = 1.0 - rate;
        let n = self.value(a).len();
        let mask: Vec<f64> =
            (0..n).map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let (r, c) = self.dims(a);
        let out = self.value(a).data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let t = Tensor::matrix(r, c, out)?;
        Ok(self.push_unary(a, t, Op::Dropout(a, mask)))
    }

    /// Gathers rows by index; embedding lookup.
    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> OpResult {
        let (r, c) = self.dims(a);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(TensorError::Invalid {
                    op: "select_rows",
                    msg: format!("row {i} out of range for shape {:?}", self.shape(a)),
                });
            }
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let t = Tensor::matrix(indices.len(), c, out)?;
        Ok(self.push_unary(a, t, Op::SelectRows(a, indices.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> OpResult {
        let Some(&first) = parts.first() else {
            return Err(TensorError::Invalid { op: "concat_rows", msg: "no inputs".into() });
        };
        let c = self.dims(first).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pc != c {
                return Err(TensorError::mismatch("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += pr;
            out.extend_from_slice(self.value(p).data());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::matrix(rows, c, out)?, Op::ConcatRows(parts.to_vec()), needs))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> OpResult {
        let Some(&first) = parts.first() else {
            return Err(TensorError::Invalid { op: "concat_cols", msg: "no inputs".into() });
        };
        let r = self.dims(first).0;
        let mut cols = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pr != r {
                return Err(TensorError::mismatch("concat_cols", self.shape(first), self.shape(p)));
            }
            cols += pc;
        }
        let mut out = Vec::with_capacity(r * cols);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::matrix(r, cols, out)?, Op::ConcatCols(parts.to_vec()), needs))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> OpResult {
        let (r, c) = self.dims(a);
        if start >= end || end > r {
            return Err(TensorError::Invalid {
                op: "slice_rows",
                msg: format!("range {start}..{end} invalid for shape {:?}", self.shape(a)),
            });
        }
        let out = self.value(a).data()[start * c..end * c].to_vec();
        let t = Tensor::matrix(end - start, c, out)?;
        Ok(self.push_unary(a, t, Op::SliceRows(a, start)))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> OpResult {
        let (r, c) = self.dims(a);
        if start >= end || end > c {
            return Err(TensorError::Invalid {
                op: "slice_cols",
                msg: format!("range {start}..{end} invalid for shape {:?}", self.shape(a)),
            });
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + end]);
        }
        let t = Tensor::matrix(r, end - start, out)?;
        Ok(self.push_unary(a, t, Op::SliceCols(a, start)))
    }

    /// Column-wise max over rows, giving `1 x c`. Ties go to the lowest row.
    pub fn max_pool_rows(&mut self, a: Var) -> OpResult {
        let (r, c) = self.dims(a);
        if r == 0 {
            return Err(TensorError::Invalid { op: "max_pool_rows", msg: "no rows to pool".into() });
        }
        let src = self.value(a).data();
        let mut out = src[..c].to_vec();
        let mut arg = vec![0usize; c];
        for i in 1..r {
            for j in 0..c {
                let v = src[i * c + j];
                if v > out[j] {
                    out[j] = v;
                    arg[j] = i;
                }
            }
        }
        let t = Tensor::matrix(1, c, out)?;
        Ok(self.push_unary(a, t, Op::MaxPoolRows(a, arg)))
    }

    /// Elementwise max across equally shaped inputs. Ties go to the earliest input.
    pub fn elementwise_max(&mut self, parts: &[Var]) -> OpResult {
        let Some(&first) = parts.first() else {
            return Err(TensorError::Invalid { op: "elementwise_max", msg: "no inputs".into() });
        };
        if parts.len() == 1 {
            return Ok(first);
        }
        let shape = self.shape(first).to_vec();
        let mut out = self.value(first).data().to_vec();
        let mut arg = vec![0usize; out.len()];
        for (k, &p) in parts.iter().enumerate().skip(1) {
            if self.shape(p) != shape.as_slice() {
                return Err(TensorError::mismatch("elementwise_max", &shape, self.shape(p)));
            }
            for (e, &v) in self.value(p).data().iter().enumerate() {
                if v > out[e] {
                    out[e] = v;
                    arg[e] = k;
                }
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::new(shape, out)?, Op::ElemMax(parts.to_vec(), arg), needs))
    }

    /// Column-wise mean over rows, giving `1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> OpResult {
        let (r, c) = self.dims(a);
        if r == 0 {
            return Err(TensorError::Invalid { op: "mean_rows", msg: "no rows".into() });
        }
        let mut out = vec![0.0; c];
        for row in self.value(a).data().chunks(c) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o /= r as f64);
        let t = Tensor::matrix(1, c, out)?;
        Ok(self.push_unary(a, t, Op::MeanRows(a)))
    }

    pub fn transpose(&mut self, a: Var) -> OpResult {
        let t = self.value(a).transpose();
        Ok(self.push_unary(a, t, Op::Transpose(a)))
    }

    pub fn sum(&mut self, a: Var) -> OpResult {
        let s = self.value(a).data().iter().sum();
        Ok(self.push_unary(a, Tensor::scalar(s), Op::SumAll(a)))
    }

    /// Sum of scalars.
    pub fn add_all(&mut self, parts: &[Var]) -> OpResult {
        let mut acc = match parts.first() {
            Some(&v) => v,
            None => return Ok(self.constant(Tensor::scalar(0.0))),
        };
        for &p in &parts[1..] {
            acc = self.add(acc, p)?;
        }
        Ok(acc)
    }

    /// Summed binary cross-entropy on logits:
    /// `sum_i  w_pos * y_i * -log(sigmoid(z_i)) + (1 - y_i) * -log(1 - sigmoid(z_i))`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], pos_weight: f64) -> OpResult {
        let z = self.value(logits).data();
        if z.len() != targets.len() {
            return Err(TensorError::mismatch("bce_with_logits", self.shape(logits), &[targets.len()]));
        }
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(z.len());
        for (&zi, &y) in z.iter().zip(targets) {
            loss += pos_weight * y * softplus(-zi) + (1.0 - y) * softplus(zi);
            let p = sigmoid(zi);
            grad.push(pos_weight * y * (p - 1.0) + (1.0 - y) * p);
        }
        Ok(self.push_unary(logits, Tensor::scalar(loss), Op::BceWithLogits(logits, grad)))
    }

    /// Negative log-likelihood of `gold` under a linear-chain CRF with
    /// per-position `emissions` (`n x L`) and `transitions` (`L x L`, from row
    /// label to column label). No start or end scores.
    pub fn crf_nll(&mut self, emissions: Var, transitions: Var, gold: &[usize]) -> OpResult {
        let (n, l) = self.dims(emissions);
        if self.dims(transitions) != (l, l) {
            return Err(TensorError::mismatch("crf_nll", self.shape(emissions), self.shape(transitions)));
        }
        if gold.len() != n || n == 0 {
            return Err(TensorError::Invalid {
                op: "crf_nll",
                msg: format!("{} gold labels for {} positions", gold.len(), n),
            });
        }
        if let Some(&bad) = gold.iter().find(|&&y| y >= l) {
            return Err(TensorError::Invalid { op: "crf_nll", msg: format!("label {bad} out of range {l}") });
        }
        let em = self.value(emissions).data();
        let tr = self.value(transitions).data();
        let (log_z, unary, pairwise) = crate::crf::marginals(em, tr, n, l);
        let mut gold_score = em[gold[0]];
        for t in 1..n {
            gold_score += tr[gold[t - 1] * l + gold[t]] + em[t * l + gold[t]];
        }
        let mut d_em = unary;
        let mut d_tr = pairwise;
        for t in 0..n {
            d_em[t * l + gold[t]] -= 1.0;
            if t > 0 {
                d_tr[gold[t - 1] * l + gold[t]] -= 1.0;
            }
        }
        let needs = self.needs(emissions) || self.needs(transitions);
        let op = Op::CrfNll { emissions, transitions, d_emissions: d_em, d_transitions: d_tr };
        Ok(self.push(Tensor::scalar(log_z - gold_score), op, needs))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::with_capacity(self.store.len());

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backprop_node(node, &g, &mut grads, &mut out)?;
        }
        Ok(out)
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.needs(v) {
            return None;
        }
        let n = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn backprop_node(
        &self,
        node: &Node,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        out: &mut Gradients,
    ) -> Result<(), TensorError> {
        let y = node.value.data();
        match &node.op {
            Op::Const => {}
            Op::Param(id) => out.add(*id, &Tensor::new(node.value.shape().to_vec(), g.to_vec())?),
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if let Some(ga) = self.slot(grads, *a) {
                    mm_nt(g, self.value(*b).data(), ga, m, n, k);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    mm_tn(self.value(*a).data(), g, gb, m, k, n);
                }
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).0;
                if let Some(ga) = self.slot(grads, *a) {
                    mm_nn(g, self.value(*b).data(), ga, m, n, k);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    mm_tn(g, self.value(*a).data(), gb, m, n, k);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, gv)| *x += gv);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    let bc = gb.len();
                    for (e, gv) in g.iter().enumerate() {
                        gb[e % bc] += sign * gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let bc = bv.len();
                if let Some(ga) = self.slot(grads, *a) {
                    for (e, gv) in g.iter().enumerate() {
                        ga[e] += gv * bv[e % bc];
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for (e, gv) in g.iter().enumerate() {
                        gb[e % bc] += gv * av[e];
                    }
                }
            }
            Op::Scale(a, f) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, gv)| *x += gv * f);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for e in 0..g.len() {
                        ga[e] += g[e] * y[e] * (1.0 - y[e]);
                    }
                }
            }
            Op::Relu(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for e in 0..g.len() {
                        if y[e] > 0.0 {
                            ga[e] += g[e];
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let c = node.value.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for ((gr, yr), ar) in g.chunks(c).zip(y.chunks(c)).zip(ga.chunks_mut(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for j in 0..c {
                            ar[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::LogSumExp(a) => {
                let c = self.dims(*a).1;
                let x = self.value(*a).data();
                if let Some(ga) = self.slot(grads, *a) {
                    for (r, (xr, ar)) in x.chunks(c).zip(ga.chunks_mut(c)).enumerate() {
                        for j in 0..c {
                            ar[j] += g[r] * (xr[j] - y[r]).exp();
                        }
                    }
                }
            }
            Op::LayerNorm(a, inv_std) => {
                let c = node.value.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for (r, ((gr, yr), ar)) in g.chunks(c).zip(y.chunks(c)).zip(ga.chunks_mut(c)).enumerate() {
                        let mean_g = gr.iter().sum::<f64>() / c as f64;
                        let mean_gy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / c as f64;
                        for j in 0..c {
                            ar[j] += inv_std[r] * (gr[j] - mean_g - yr[j] * mean_gy);
                        }
                    }
                }
            }
            Op::Dropout(a, mask) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for e in 0..g.len() {
                        ga[e] += g[e] * mask[e];
                    }
                }
            }
            Op::SelectRows(a, idx) => {
                let c = node.value.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for (k, &i) in idx.iter().enumerate() {
                        for j in 0..c {
                            ga[i * c + j] += g[k * c + j];
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if let Some(gp) = self.slot(grads, p) {
                        gp.iter_mut().zip(&g[off..off + n]).for_each(|(x, gv)| *x += gv);
                    }
                    off += n;
                }
            }
            Op::ConcatCols(parts) => {
                let (r, total) = node.value.dims2();
                let mut off = 0;
                for &p in parts {
                    let pc = self.dims(p).1;
                    if let Some(gp) = self.slot(grads, p) {
                        for i in 0..r {
                            for j in 0..pc {
                                gp[i * pc + j] += g[i * total + off + j];
                            }
                        }
                    }
                    off += pc;
                }
            }
            Op::SliceRows(a, start) => {
                let c = node.value.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    let base = start * c;
                    for (e, gv) in g.iter().enumerate() {
                        ga[base + e] += gv;
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let (r, w) = node.value.dims2();
                let c = self.dims(*a).1;
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..r {
                        for j in 0..w {
                            ga[i * c + start + j] += g[i * w + j];
                        }
                    }
                }
            }
            Op::MaxPoolRows(a, arg) => {
                let c = node.value.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for j in 0..c {
                        ga[arg[j] * c + j] += g[j];
                    }
                }
            }
            Op::ElemMax(parts, arg) => {
                for (k, &p) in parts.iter().enumerate() {
                    if let Some(gp) = self.slot(grads, p) {
                        for e in 0..g.len() {
                            if arg[e] == k {
                                gp[e] += g[e];
                            }
                        }
                    }
                }
            }
            Op::MeanRows(a) => {
                let (r, c) = self.dims(*a);
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j] / r as f64;
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                let (r, c) = self.dims(*a);
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::BceWithLogits(a, d) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(d).for_each(|(x, dv)| *x += g[0] * dv);
                }
            }
            Op::CrfNll { emissions, transitions, d_emissions, d_transitions } => {
                if let Some(ge) = self.slot(grads, *emissions) {
                    ge.iter_mut().zip(d_emissions).for_each(|(x, dv)| *x += g[0] * dv);
                }
                if let Some(gt) = self.slot(grads, *transitions) {
                    gt.iter_mut().zip(d_transitions).for_each(|(x, dv)| *x += g[0] * dv);
                }
            }
        }
        Ok(())
    }
}
