use super::kernels::{self, ConvDims, ConvSpec};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Batch-norm statistics source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize with the statistics of the current batch.
    Training,
    /// Normalize with externally supplied running averages.
    Inference,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    DivOrZero(Var, Var),
    AddBias(Var, Var),
    MulLast(Var, Var),
    MulColumn(Var, Var),
    AddScalar(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, T),
    AddConst(Var),
    MatMul { a: Var, b: Var, trans_b: bool },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<T> },
    Conv2d { x: Var, w: Var, b: Var, spec: ConvSpec },
    MaxPool { x: Var, argmax: Vec<usize> },
    AvgPool { x: Var, f: usize, s: usize },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, training: bool },
    Reshape(Var),
    Concat(Vec<Var>),
    SliceLast { x: Var, start: usize },
    SelectStep { x: Var, t: usize },
    Stack(Vec<Var>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a forward computation and replays it in reverse for gradients.
///
/// Nodes are appended in evaluation order, so the node list is a
/// topological order of the expression graph and parents always have
/// smaller indices than their children.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_rows<T: Scalar>(x: &[T], width: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (row, dst) in x.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    out
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf (parameter or input under test).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient from the most recent [`Tape::backward`], if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, tag: Op<T>) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(op, va, vb)?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape(), data)?;
        Ok(self.push(value, tag, &[a, b]))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, tag: Op<T>) -> Var {
        let value = self.value(x).map(f);
        self.push(value, tag, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise `a / b`, defined as 0 (with zero gradient) where `b == 0`.
    pub fn div_or_zero(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(
            "div",
            a,
            b,
            |x, y| if y == T::zero() { T::zero() } else { x / y },
            Op::DivOrZero(a, b),
        )
    }

    /// Adds a vector along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let m = vx.last_dim();
        if vb.shape() != [m] {
            return Err(Error::shape("add_bias", format!("bias {:?} for input {:?}", vb.shape(), vx.shape())));
        }
        let mut data = vx.data().to_vec();
        for row in data.chunks_exact_mut(m) {
            for (d, &b) in row.iter_mut().zip(vb.data()) {
                *d += b;
            }
        }
        let value = Tensor::new(vx.shape(), data)?;
        Ok(self.push(value, Op::AddBias(x, bias), &[x, bias]))
    }

    /// Multiplies elementwise by a vector broadcast along the last axis.
    pub fn mul_last(&mut self, x: Var, v: Var) -> Result<Var> {
        let (vx, vv) = (self.value(x), self.value(v));
        let m = vx.last_dim();
        if vv.shape() != [m] {
            return Err(Error::shape("mul_last", format!("vector {:?} for input {:?}", vv.shape(), vx.shape())));
        }
        let mut data = vx.data().to_vec();
        for row in data.chunks_exact_mut(m) {
            for (d, &b) in row.iter_mut().zip(vv.data()) {
                *d *= b;
            }
        }
        let value = Tensor::new(vx.shape(), data)?;
        Ok(self.push(value, Op::MulLast(x, v), &[x, v]))
    }

    /// Scales each row of an `N×m` matrix by the matching entry of an `N×1` column.
    pub fn mul_column(&mut self, x: Var, col: Var) -> Result<Var> {
        let (vx, vc) = (self.value(x), self.value(col));
        if vx.rank() != 2 || vc.shape() != [vx.shape()[0], 1] {
            return Err(Error::shape("mul_column", format!("{:?} by {:?}", vx.shape(), vc.shape())));
        }
        let m = vx.last_dim();
        let mut data = vx.data().to_vec();
        for (row, &c) in data.chunks_exact_mut(m).zip(vc.data()) {
            for d in row {
                *d *= c;
            }
        }
        let value = Tensor::new(vx.shape(), data)?;
        Ok(self.push(value, Op::MulColumn(x, col), &[x, col]))
    }

    fn check_scalar(&self, op: &'static str, s: Var) -> Result<T> {
        let vs = self.value(s);
        if vs.len() != 1 {
            return Err(Error::shape(op, format!("expected a one-element operand, got {:?}", vs.shape())));
        }
        Ok(vs.item())
    }

    /// `x + s` for a one-element node `s`.
    pub fn add_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let k = self.check_scalar("add_scalar", s)?;
        let value = self.value(x).map(|v| v + k);
        Ok(self.push(value, Op::AddScalar(x, s), &[x, s]))
    }

    /// `x * s` for a one-element node `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let k = self.check_scalar("mul_scalar", s)?;
        let value = self.value(x).map(|v| v * k);
        Ok(self.push(value, Op::MulScalar(x, s), &[x, s]))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let k = T::of(k);
        self.unary(x, |v| v * k, Op::Scale(x, k))
    }

    pub fn add_const(&mut self, x: Var, k: f64) -> Var {
        let k = T::of(k);
        self.unary(x, |v| v + k, Op::AddConst(x))
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rank() != 2 || vb.rank() != 2 {
            return Err(Error::shape("matmul", format!("{:?} x {:?} must both be 2-D", va.shape(), vb.shape())));
        }
        let (m, k) = (va.shape()[0], va.shape()[1]);
        let (kb, n) = if trans_b { (vb.shape()[1], vb.shape()[0]) } else { (vb.shape()[0], vb.shape()[1]) };
        if k != kb {
            return Err(Error::shape(
                "matmul",
                format!("inner dimensions differ: {:?} x {:?}{}", va.shape(), vb.shape(), if trans_b { "ᵀ" } else { "" }),
            ));
        }
        let mut out = vec![T::zero(); m * n];
        super::scalar::gemm(m, k, n, va.data(), false, vb.data(), trans_b, T::zero(), &mut out);
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push(value, Op::MatMul { a, b, trans_b }, &[a, b]))
    }

    /// `a · b` for 2-D operands.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` for 2-D operands.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    /// Fully connected layer: `y_j = Σ_i w_ji x_i + b_j` for input `N×n`,
    /// weights `m×n`, bias `m`.
    pub fn dense(&mut self, x: Var, weights: Var, bias: Var) -> Result<Var> {
        let y = self.matmul_nt(x, weights).map_err(|e| match e {
            Error::Shape { detail, .. } => Error::shape("dense", detail),
            other => other,
        })?;
        self.add_bias(y, bias)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu(x))
    }

    /// Softmax along the last axis, computed with max-subtraction.
    pub fn softmax(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let data = softmax_rows(vx.data(), vx.last_dim());
        let value = Tensor::new(vx.shape(), data).expect("same shape");
        self.push(value, Op::Softmax(x), &[x])
    }

    /// Mean negative log-likelihood of integer targets under row-softmax of `N×K` logits.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let vl = self.value(logits);
        let k = vl.last_dim();
        if vl.rank() != 2 || vl.shape()[0] != targets.len() || targets.iter().any(|&t| t >= k) {
            return Err(Error::shape("cross_entropy", format!("logits {:?}, {} targets", vl.shape(), targets.len())));
        }
        let probs = softmax_rows(vl.data(), k);
        let n = targets.len();
        let loss = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| -(probs[i * k + t].max(T::min_positive_value())).ln())
            .sum::<T>()
            / T::of(n as f64);
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), probs };
        Ok(self.push(Tensor::scalar(loss), op, &[logits]))
    }

    /// NHWC convolution with weights `D₂×F×F×D₁` and bias `D₂`.
    pub fn conv2d(&mut self, x: Var, spec: ConvSpec, weights: Var, bias: Var) -> Result<Var> {
        let [n, h, w, d] = kernels::nhwc(self.shape(x), "conv2d")?;
        if d != spec.in_depth {
            return Err(Error::shape("conv2d", format!("input depth {d} but spec expects {}", spec.in_depth)));
        }
        if self.shape(weights) != spec.weight_shape() || self.shape(bias) != [spec.out_depth] {
            return Err(Error::shape(
                "conv2d",
                format!("weights {:?} / bias {:?} do not match {spec:?}", self.shape(weights), self.shape(bias)),
            ));
        }
        let (h2, w2) = spec.output_hw(h, w)?;
        let dims = ConvDims { n, h, w, h2, w2 };
        let out = kernels::conv2d_forward(
            self.value(x).data(),
            &dims,
            &spec,
            self.value(weights).data(),
            self.value(bias).data(),
        );
        let value = Tensor::new(&[n, h2, w2, spec.out_depth], out)?;
        Ok(self.push(value, Op::Conv2d { x, w: weights, b: bias, spec }, &[x, weights, bias]))
    }

    pub fn maxpool2d(&mut self, x: Var, filter: usize, stride: usize) -> Result<Var> {
        let (shape, out, argmax) = kernels::maxpool_forward(self.value(x).data(), self.shape(x), filter, stride)?;
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::MaxPool { x, argmax }, &[x]))
    }

    pub fn avgpool2d(&mut self, x: Var, filter: usize, stride: usize) -> Result<Var> {
        let (shape, out) = kernels::avgpool_forward(self.value(x).data(), self.shape(x), filter, stride)?;
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::AvgPool { x, f: filter, s: stride }, &[x]))
    }

    /// Per-channel (last axis) normalization. In training mode the batch
    /// statistics are used and returned so the caller can fold them into
    /// running averages; in inference mode `running` supplies them.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode,
        eps: f64,
        running: (&[T], &[T]),
    ) -> Result<(Var, Option<(Vec<T>, Vec<T>)>)> {
        let vx = self.value(x);
        let c = vx.last_dim();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("batchnorm", format!("gamma/beta must be [{c}]")));
        }
        let m = vx.len() / c;
        let (mean, var, batch) = match mode {
            NormMode::Training => {
                if m < 2 && eps <= 0.0 {
                    return Err(Error::DegenerateVariance);
                }
                let (mean, var) = kernels::channel_moments(vx.data(), c);
                (mean.clone(), var.clone(), Some((mean, var)))
            }
            NormMode::Inference => {
                if running.0.len() != c || running.1.len() != c {
                    return Err(Error::shape("batchnorm", "running statistics length mismatch"));
                }
                (running.0.to_vec(), running.1.to_vec(), None)
            }
        };
        let eps = T::of(eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vx.data().to_vec();
        let mut out = vec![T::zero(); xhat.len()];
        for (row, orow) in xhat.chunks_exact_mut(c).zip(out.chunks_exact_mut(c)) {
            for k in 0..c {
                row[k] = (row[k] - mean[k]) * inv_std[k];
                orow[k] = g[k] * row[k] + b[k];
            }
        }
        let value = Tensor::new(vx.shape(), out)?;
        let op = Op::BatchNorm { x, gamma, beta, xhat, inv_std, training: mode == NormMode::Training };
        Ok((self.push(value, op, &[x, gamma, beta]), batch))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape).map_err(|e| match e {
            Error::Shape { detail, .. } => Error::shape("reshape", detail),
            other => other,
        })?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat", "no operands"))?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let rows = self.value(*first).rows();
        let mut width = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat", format!("leading axes {:?} vs {:?}", &s[..s.len() - 1], lead)));
            }
            width += s[s.len() - 1];
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                let v = self.value(p);
                let w = v.last_dim();
                data.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(width);
        let value = Tensor::new(&shape, data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec()), parts))
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let vx = self.value(x);
        let w = vx.last_dim();
        if len == 0 || start + len > w {
            return Err(Error::shape("slice_last", format!("{start}..{} of width {w}", start + len)));
        }
        let mut data = Vec::with_capacity(vx.rows() * len);
        for row in vx.data().chunks_exact(w) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = vx.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let value = Tensor::new(&shape, data)?;
        Ok(self.push(value, Op::SliceLast { x, start }, &[x]))
    }

    /// Time step `t` of a `B×L×d` sequence, as `B×d`.
    pub fn select_step(&mut self, x: Var, t: usize) -> Result<Var> {
        let vx = self.value(x);
        let &[b, l, d] = vx.shape() else {
            return Err(Error::shape("select_step", format!("expected B×L×d, got {:?}", vx.shape())));
        };
        if t >= l {
            return Err(Error::shape("select_step", format!("step {t} of length {l}")));
        }
        let mut data = Vec::with_capacity(b * d);
        for i in 0..b {
            data.extend_from_slice(&vx.data()[(i * l + t) * d..(i * l + t + 1) * d]);
        }
        let value = Tensor::new(&[b, d], data)?;
        Ok(self.push(value, Op::SelectStep { x, t }, &[x]))
    }

    /// Stacks `L` matrices of shape `B×d` into `B×L×d`.
    pub fn stack(&mut self, steps: &[Var]) -> Result<Var> {
        let first = steps.first().ok_or_else(|| Error::shape("stack", "no steps"))?;
        let s0 = self.shape(*first).to_vec();
        let &[b, d] = &s0[..] else {
            return Err(Error::shape("stack", format!("expected B×d steps, got {s0:?}")));
        };
        if steps.iter().any(|&s| self.shape(s) != s0) {
            return Err(Error::shape("stack", "steps differ in shape"));
        }
        let l = steps.len();
        let mut data = vec![T::zero(); b * l * d];
        for (t, &s) in steps.iter().enumerate() {
            let v = self.value(s).data();
            for i in 0..b {
                data[(i * l + t) * d..(i * l + t + 1) * d].copy_from_slice(&v[i * d..(i + 1) * d]);
            }
        }
        let value = Tensor::new(&[b, l, d], data)?;
        Ok(self.push(value, Op::Stack(steps.to_vec()), steps))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let total: T = v.data().iter().copied().sum();
        let value = Tensor::scalar(total / T::of(v.len() as f64));
        self.push(value, Op::Mean(x), &[x])
    }

    /// Computes `d(loss)/d(node)` for every node upstream of `loss`,
    /// replacing the gradients of any previous call.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(nodes[loss.0].value.shape()));
        for i in (0..=loss.0).rev() {
            if !nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop(nodes, i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}

fn accumulate<T: Scalar>(nodes: &[Node<T>], grads: &mut [Option<Tensor<T>>], v: Var, delta: Vec<T>) {
    if !nodes[v.0].requires_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(g) => {
            for (a, b) in g.data_mut().iter_mut().zip(delta) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(nodes[v.0].value.shape(), delta).expect("gradient shape"));
        }
    }
}

fn wants<T>(nodes: &[Node<T>], v: Var) -> bool {
    nodes[v.0].requires_grad
}

fn backprop<T: Scalar>(nodes: &[Node<T>], i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
    let out = &nodes[i].value;
    let gd = g.data();
    let val = |v: Var| nodes[v.0].value.data();
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, gd.to_vec());
            accumulate(nodes, grads, *b, gd.to_vec());
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, gd.to_vec());
            accumulate(nodes, grads, *b, gd.iter().map(|&x| -x).collect());
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            if wants(nodes, *a) {
                accumulate(nodes, grads, *a, gd.iter().zip(vb).map(|(&g, &y)| g * y).collect());
            }
            if wants(nodes, *b) {
                accumulate(nodes, grads, *b, gd.iter().zip(va).map(|(&g, &x)| g * x).collect());
            }
        }
        Op::DivOrZero(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let z = T::zero();
            if wants(nodes, *a) {
                let d = gd.iter().zip(vb).map(|(&g, &y)| if y == z { z } else { g / y }).collect();
                accumulate(nodes, grads, *a, d);
            }
            if wants(nodes, *b) {
                let d = gd
                    .iter()
                    .zip(va.iter().zip(vb))
                    .map(|(&g, (&x, &y))| if y == z { z } else { -g * x / (y * y) })
                    .collect();
                accumulate(nodes, grads, *b, d);
            }
        }
        Op::AddBias(x, b) => {
            accumulate(nodes, grads, *x, gd.to_vec());
            if wants(nodes, *b) {
                let m = out.last_dim();
                let mut gb = vec![T::zero(); m];
                for row in gd.chunks_exact(m) {
                    for (a, &v) in gb.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                accumulate(nodes, grads, *b, gb);
            }
        }
        Op::MulLast(x, v) => {
            let m = out.last_dim();
            let (vx, vv) = (val(*x), val(*v));
            if wants(nodes, *x) {
                let mut gx = gd.to_vec();
                for row in gx.chunks_exact_mut(m) {
                    for (g, &k) in row.iter_mut().zip(vv) {
                        *g *= k;
                    }
                }
                accumulate(nodes, grads, *x, gx);
            }
            if wants(nodes, *v) {
                let mut gv = vec![T::zero(); m];
                for (gr, xr) in gd.chunks_exact(m).zip(vx.chunks_exact(m)) {
                    for k in 0..m {
                        gv[k] += gr[k] * xr[k];
                    }
                }
                accumulate(nodes, grads, *v, gv);
            }
        }
        Op::MulColumn(x, c) => {
            let m = out.last_dim();
            let (vx, vc) = (val(*x), val(*c));
            if wants(nodes, *x) {
                let mut gx = gd.to_vec();
                for (row, &cv) in gx.chunks_exact_mut(m).zip(vc) {
                    for v in row {
                        *v *= cv;
                    }
                }
                accumulate(nodes, grads, *x, gx);
            }
            if wants(nodes, *c) {
                let gc = gd
                    .chunks_exact(m)
                    .zip(vx.chunks_exact(m))
                    .map(|(gr, xr)| gr.iter().zip(xr).map(|(&a, &b)| a * b).sum())
                    .collect();
                accumulate(nodes, grads, *c, gc);
            }
        }
        Op::AddScalar(x, s) => {
            accumulate(nodes, grads, *x, gd.to_vec());
            if wants(nodes, *s) {
                accumulate(nodes, grads, *s, vec![gd.iter().copied().sum()]);
            }
        }
        Op::MulScalar(x, s) => {
            let k = val(*s)[0];
            if wants(nodes, *x) {
                accumulate(nodes, grads, *x, gd.iter().map(|&v| v * k).collect());
            }
            if wants(nodes, *s) {
                let t = gd.iter().zip(val(*x)).map(|(&a, &b)| a * b).sum();
                accumulate(nodes, grads, *s, vec![t]);
            }
        }
        Op::Scale(x, k) => accumulate(nodes, grads, *x, gd.iter().map(|&v| v * *k).collect()),
        Op::AddConst(x) | Op::Reshape(x) => accumulate(nodes, grads, *x, gd.to_vec()),
        Op::MatMul { a, b, trans_b } => {
            let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
            let (m, k) = (sa[0], sa[1]);
            let n = out.shape()[1];
            if wants(nodes, *a) {
                // dA (m×k) = dY (m×n) · op(B)ᵀ
                let mut ga = vec![T::zero(); m * k];
                super::scalar::gemm(m, n, k, gd, false, val(*b), !*trans_b, T::zero(), &mut ga);
                accumulate(nodes, grads, *a, ga);
            }
            if wants(nodes, *b) {
                let mut gb = vec![T::zero(); sb[0] * sb[1]];
                if *trans_b {
                    // B is n×k: dB = dYᵀ (n×m) · A (m×k)
                    super::scalar::gemm(n, m, k, gd, true, val(*a), false, T::zero(), &mut gb);
                } else {
                    // B is k×n: dB = Aᵀ (k×m) · dY (m×n)
                    super::scalar::gemm(k, m, n, val(*a), true, gd, false, T::zero(), &mut gb);
                }
                accumulate(nodes, grads, *b, gb);
            }
        }
        Op::Sigmoid(x) => {
            let d = gd.iter().zip(out.data()).map(|(&g, &y)| g * y * (T::one() - y)).collect();
            accumulate(nodes, grads, *x, d);
        }
        Op::Tanh(x) => {
            let d = gd.iter().zip(out.data()).map(|(&g, &y)| g * (T::one() - y * y)).collect();
            accumulate(nodes, grads, *x, d);
        }
        Op::Relu(x) => {
            let d = gd
                .iter()
                .zip(val(*x))
                .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                .collect();
            accumulate(nodes, grads, *x, d);
        }
        Op::Softmax(x) => {
            let w = out.last_dim();
            let mut d = vec![T::zero(); gd.len()];
            for ((dr, gr), yr) in d.chunks_exact_mut(w).zip(gd.chunks_exact(w)).zip(out.data().chunks_exact(w)) {
                let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                for ((o, &gv), &y) in dr.iter_mut().zip(gr).zip(yr) {
                    *o = y * (gv - dot);
                }
            }
            accumulate(nodes, grads, *x, d);
        }
        Op::CrossEntropy { logits, targets, probs } => {
            let k = nodes[logits.0].value.last_dim();
            let scale = gd[0] / T::of(targets.len() as f64);
            let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
            for (r, &t) in targets.iter().enumerate() {
                d[r * k + t] -= scale;
            }
            accumulate(nodes, grads, *logits, d);
        }
        Op::Conv2d { x, w, b, spec } => {
            let xs = nodes[x.0].value.shape();
            let os = out.shape();
            let dims = ConvDims { n: xs[0], h: xs[1], w: xs[2], h2: os[1], w2: os[2] };
            let (gx, gw, gb) = kernels::conv2d_backward(val(*x), &dims, spec, val(*w), gd, wants(nodes, *x));
            if let Some(gx) = gx {
                accumulate(nodes, grads, *x, gx);
            }
            accumulate(nodes, grads, *w, gw);
            accumulate(nodes, grads, *b, gb);
        }
        Op::MaxPool { x, argmax } => {
            let mut gx = vec![T::zero(); nodes[x.0].value.len()];
            for (&idx, &gv) in argmax.iter().zip(gd) {
                gx[idx] += gv;
            }
            accumulate(nodes, grads, *x, gx);
        }
        Op::AvgPool { x, f, s } => {
            let gx = kernels::avgpool_backward(gd, nodes[x.0].value.shape(), *f, *s);
            accumulate(nodes, grads, *x, gx);
        }
        Op::BatchNorm { x, gamma, beta, xhat, inv_std, training } => {
            let c = out.last_dim();
            let m = gd.len() / c;
            let gam = val(*gamma);
            let mut sum_g = vec![T::zero(); c];
            let mut sum_gx = vec![T::zero(); c];
            for (gr, xr) in gd.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                for k in 0..c {
                    sum_g[k] += gr[k];
                    sum_gx[k] += gr[k] * xr[k];
                }
            }
            if wants(nodes, *x) {
                let mut gx = vec![T::zero(); gd.len()];
                let inv_m = T::one() / T::of(m as f64);
                for ((o, gr), xr) in gx.chunks_exact_mut(c).zip(gd.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
                    for k in 0..c {
                        let scale = gam[k] * inv_std[k];
                        o[k] = if *training {
                            scale * (gr[k] - inv_m * sum_g[k] - xr[k] * inv_m * sum_gx[k])
                        } else {
                            scale * gr[k]
                        };
                    }
                }
                accumulate(nodes, grads, *x, gx);
            }
            accumulate(nodes, grads, *gamma, sum_gx);
            accumulate(nodes, grads, *beta, sum_g);
        }
        Op::Concat(parts) => {
            let rows = out.rows();
            let width = out.last_dim();
            let mut offset = 0;
            for &p in parts {
                let w = nodes[p.0].value.last_dim();
                if wants(nodes, p) {
                    let mut d = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        d.extend_from_slice(&gd[r * width + offset..r * width + offset + w]);
                    }
                    accumulate(nodes, grads, p, d);
                }
                offset += w;
            }
        }
        Op::SliceLast { x, start } => {
            let w = nodes[x.0].value.last_dim();
            let len = out.last_dim();
            let mut d = vec![T::zero(); nodes[x.0].value.len()];
            for (dr, gr) in d.chunks_exact_mut(w).zip(gd.chunks_exact(len)) {
                dr[*start..*start + len].copy_from_slice(gr);
            }
            accumulate(nodes, grads, *x, d);
        }
        Op::SelectStep { x, t } => {
            let s = nodes[x.0].value.shape();
            let (b, l, d) = (s[0], s[1], s[2]);
            let mut gx = vec![T::zero(); b * l * d];
            for r in 0..b {
                gx[(r * l + t) * d..(r * l + t + 1) * d].copy_from_slice(&gd[r * d..(r + 1) * d]);
            }
            accumulate(nodes, grads, *x, gx);
        }
        Op::Stack(steps) => {
            let s = out.shape();
            let (b, l, d) = (s[0], s[1], s[2]);
            for (t, &st) in steps.iter().enumerate() {
                if !wants(nodes, st) {
                    continue;
                }
                let mut gs = Vec::with_capacity(b * d);
                for r in 0..b {
                    gs.extend_from_slice(&gd[(r * l + t) * d..(r * l + t + 1) * d]);
                }
                accumulate(nodes, grads, st, gs);
            }
        }
        Op::Sum(x) => {
            let n = nodes[x.0].value.len();
            accumulate(nodes, grads, *x, vec![gd[0]; n]);
        }
        Op::Mean(x) => {
            let n = nodes[x.0].value.len();
            accumulate(nodes, grads, *x, vec![gd[0] / T::of(n as f64); n]);
        }
    }
}
