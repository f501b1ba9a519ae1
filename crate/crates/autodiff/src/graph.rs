use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{LOG_EPS, LOG_STD_MAX, LOG_STD_MIN};

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Constant,
    Input,
    Param {
        store: u64,
        id: usize,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Min(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Clamp(usize, T, T),
    Softmax {
        x: usize,
        axis: usize,
    },
    LayerNorm {
        x: usize,
        inv_std: Vec<T>,
    },
    Sum(usize),
    Mean(usize),
    SumAxis {
        x: usize,
        axis: usize,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Slice {
        x: usize,
        axis: usize,
        start: usize,
    },
    GaussianSample {
        mean: usize,
        log_std: usize,
        noise: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operation recorder.
///
/// Nodes are appended in execution order, so the recording is always a
/// topological order and [`Graph::backward`] is a single reverse sweep.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// How the operands of a binary elementwise op line up.
#[derive(Debug, Clone, Copy)]
enum Broadcast {
    Same,
    /// Right operand (of this many elements) repeats across the left.
    Right(usize),
    /// Left operand (of this many elements) repeats across the right.
    Left(usize),
}

fn is_suffix(small: &[usize], big: &[usize]) -> bool {
    small.len() <= big.len() && big[big.len() - small.len()..] == *small
}

fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<(Vec<usize>, Broadcast)> {
    if a == b {
        return Ok((a.to_vec(), Broadcast::Same));
    }
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    if nb == 1 || (b.len() < a.len() && is_suffix(b, a)) {
        return Ok((a.to_vec(), Broadcast::Right(nb)));
    }
    if na == 1 || (a.len() < b.len() && is_suffix(a, b)) {
        return Ok((b.to_vec(), Broadcast::Left(na)));
    }
    Err(TensorError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    })
}

/// `(outer, len, inner)` decomposition of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Sums `g` (of the broadcast shape) down to `n` repeating elements.
fn reduce_repeats<T: Scalar>(g: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for chunk in g.chunks(n) {
        for (o, &x) in out.iter_mut().zip(chunk) {
            *o += x;
        }
    }
    out
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
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

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: usize) -> bool {
        self.nodes[v].requires_grad
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Records a leaf whose gradient is reported by [`Graph::backward`].
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, true)
    }

    /// Pulls a parameter into the graph; its gradient is retrievable with
    /// [`Gradients::param_grads`].
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(
            store.get(id).clone(),
            Op::Param {
                store: store.store_id(),
                id: id.0,
            },
            true,
        )
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        make: impl FnOnce(usize, usize) -> Op<T>,
    ) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (shape, bc) = broadcast(op, va.shape(), vb.shape())?;
        let (da, db) = (va.data(), vb.data());
        let data: Vec<T> = match bc {
            Broadcast::Same => da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Right(n) => da
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, db[i % n]))
                .collect(),
            Broadcast::Left(n) => db
                .iter()
                .enumerate()
                .map(|(i, &y)| f(da[i % n], y))
                .collect(),
        };
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(Tensor::from_vec(shape, data)?, make(a.0, b.0), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// Elementwise minimum of two equally shaped tensors.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op: "minimum",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        self.binary("minimum", a, b, |x, y| if y < x { y } else { x }, Op::Min)
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.nodes[x.0].value.map(f);
        let rg = self.rg(x.0);
        self.push(value, op, rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::cast(c);
        self.unary(x, |v| v * c, Op::Scale(x.0, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let c = T::cast(c);
        self.unary(x, |v| v + c, Op::AddScalar(x.0))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| if v > T::zero() { v } else { T::zero() },
            Op::Relu(x.0),
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x.0))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.exp(), Op::Exp(x.0))
    }

    /// Natural log with the argument clamped below at [`LOG_EPS`].
    pub fn log(&mut self, x: Var) -> Var {
        let eps = T::cast(LOG_EPS);
        self.unary(x, |v| v.max(eps).ln(), Op::Log(x.0))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let (lo, hi) = (T::cast(lo), T::cast(hi));
        self.unary(x, |v| v.max(lo).min(hi), Op::Clamp(x.0, lo, hi))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.nodes[x.0].value.clone().reshaped(shape.to_vec())?;
        let rg = self.rg(x.0);
        Ok(self.push(value, Op::Reshape(x.0), rg))
    }

    /// Matrix product over the last two axes.
    ///
    /// `a` is `[..., m, k]`; `b` is either a shared `[k, n]` matrix or a
    /// batch `[..., k, n]` with the same leading dimensions as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            left: va.shape().to_vec(),
            right: vb.shape().to_vec(),
        };
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != kb {
            return Err(mismatch());
        }
        let lead = &sa[..sa.len() - 2];
        let batch: usize = lead.iter().product();
        let shared = sb.len() == 2;
        if !shared && sb[..sb.len() - 2] != *lead {
            return Err(mismatch());
        }
        let mut shape = lead.to_vec();
        shape.extend([m, n]);
        let mut out = vec![T::zero(); batch * m * n];
        let (da, db) = (va.data(), vb.data());
        if shared {
            T::gemm(
                batch * m,
                k,
                n,
                T::one(),
                da,
                k as isize,
                1,
                db,
                n as isize,
                1,
                T::zero(),
                &mut out,
                n as isize,
                1,
            );
        } else {
            for i in 0..batch {
                T::gemm(
                    m,
                    k,
                    n,
                    T::one(),
                    &da[i * m * k..(i + 1) * m * k],
                    k as isize,
                    1,
                    &db[i * k * n..(i + 1) * k * n],
                    n as isize,
                    1,
                    T::zero(),
                    &mut out[i * m * n..(i + 1) * m * n],
                    n as isize,
                    1,
                );
            }
        }
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(Tensor::from_vec(shape, out)?, Op::MatMul(a.0, b.0), rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        let s = v.shape();
        if s.len() < 2 {
            return Err(TensorError::InvalidArgument(format!(
                "transpose needs rank >= 2, got {s:?}"
            )));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let mut shape = s.to_vec();
        let len = shape.len();
        shape.swap(len - 2, len - 1);
        let data = transpose_last2(v.data(), r, c);
        let rg = self.rg(x.0);
        Ok(self.push(Tensor::from_vec(shape, data)?, Op::Transpose(x.0), rg))
    }

    /// Softmax along `axis`, with the per-row maximum subtracted first.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        if axis >= v.rank() {
            return Err(TensorError::InvalidArgument(format!(
                "softmax axis {axis} out of range for shape {:?}",
                v.shape()
            )));
        }
        let (outer, len, inner) = split_axis(v.shape(), axis);
        let src = v.data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let mut mx = src[at(0)];
                for j in 1..len {
                    mx = mx.max(src[at(j)]);
                }
                let mut total = T::zero();
                for j in 0..len {
                    let e = (src[at(j)] - mx).exp();
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[at(j)] = out[at(j)] / total;
                }
            }
        }
        let shape = v.shape().to_vec();
        let rg = self.rg(x.0);
        Ok(self.push(
            Tensor::from_vec(shape, out)?,
            Op::Softmax { x: x.0, axis },
            rg,
        ))
    }

    /// Normalises every row of the last axis to zero mean and unit variance
    /// (`(x - mean) / sqrt(var + eps)`, biased variance). No affine part.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let v = &self.nodes[x.0].value;
        let width = *v.shape().last().unwrap();
        let eps = T::cast(eps);
        let w = T::cast(width as f64);
        let mut out = Vec::with_capacity(v.numel());
        let mut inv_std = Vec::with_capacity(v.numel() / width);
        for row in v.data().chunks(width) {
            let mean = row.iter().copied().sum::<T>() / w;
            let var = row.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / w;
            let inv = T::one() / (var + eps).sqrt();
            out.extend(row.iter().map(|&a| (a - mean) * inv));
            inv_std.push(inv);
        }
        let shape = v.shape().to_vec();
        let rg = self.rg(x.0);
        self.push(
            Tensor::from_vec(shape, out).expect("same shape"),
            Op::LayerNorm { x: x.0, inv_std },
            rg,
        )
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data().iter().copied().sum();
        let rg = self.rg(x.0);
        self.push(Tensor::scalar(s), Op::Sum(x.0), rg)
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let s = v.data().iter().copied().sum::<T>() / T::cast(v.numel() as f64);
        let rg = self.rg(x.0);
        self.push(Tensor::scalar(s), Op::Mean(x.0), rg)
    }

    /// Sums out `axis`; a rank-1 input reduces to `[1]`.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        if axis >= v.rank() {
            return Err(TensorError::InvalidArgument(format!(
                "sum axis {axis} out of range for shape {:?}",
                v.shape()
            )));
        }
        let (outer, len, inner) = split_axis(v.shape(), axis);
        let src = v.data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let base = o * len * inner + j * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        let mut shape: Vec<usize> = v.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let rg = self.rg(x.0);
        Ok(self.push(
            Tensor::from_vec(shape, out)?,
            Op::SumAxis { x: x.0, axis },
            rg,
        ))
    }

    /// Joins tensors that agree on every axis except `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::InvalidArgument("concat of nothing".into()))?;
        let s0 = self.shape(*first).to_vec();
        if axis >= s0.len() {
            return Err(TensorError::InvalidArgument(format!(
                "concat axis {axis} out of range for shape {s0:?}"
            )));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == s0.len()
                && s.iter()
                    .zip(&s0)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: s0.clone(),
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&s0, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let v = &self.nodes[p.0].value;
                let block = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = s0;
        shape[axis] = total;
        let rg = parts.iter().any(|p| self.rg(p.0));
        Ok(self.push(
            Tensor::from_vec(shape, out)?,
            Op::Concat {
                parts: parts.iter().map(|p| p.0).collect(),
                axis,
            },
            rg,
        ))
    }

    /// `len` consecutive entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        if axis >= v.rank() || len == 0 || start + len > v.shape()[axis] {
            return Err(TensorError::InvalidArgument(format!(
                "slice [{start}, {}) of axis {axis} invalid for shape {:?}",
                start + len,
                v.shape()
            )));
        }
        let (outer, full, inner) = split_axis(v.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&v.data()[base..base + len * inner]);
        }
        let mut shape = v.shape().to_vec();
        shape[axis] = len;
        let rg = self.rg(x.0);
        Ok(self.push(
            Tensor::from_vec(shape, out)?,
            Op::Slice {
                x: x.0,
                axis,
                start,
            },
            rg,
        ))
    }

    /// Reparameterised Gaussian draw `mean + exp(clamp(log_std)) * noise`.
    ///
    /// `noise` holds standard-normal samples supplied by the caller; it is
    /// treated as a constant so gradients flow into `mean` and `log_std`.
    pub fn gaussian_sample(&mut self, mean: Var, log_std: Var, noise: &[T]) -> Result<Var> {
        let (vm, vs) = (&self.nodes[mean.0].value, &self.nodes[log_std.0].value);
        if vm.shape() != vs.shape() || noise.len() != vm.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "gaussian_sample",
                left: vm.shape().to_vec(),
                right: vs.shape().to_vec(),
            });
        }
        let (lo, hi) = (T::cast(LOG_STD_MIN), T::cast(LOG_STD_MAX));
        let data: Vec<T> = vm
            .data()
            .iter()
            .zip(vs.data())
            .zip(noise)
            .map(|((&m, &s), &e)| m + s.max(lo).min(hi).exp() * e)
            .collect();
        let shape = vm.shape().to_vec();
        let rg = self.rg(mean.0) || self.rg(log_std.0);
        Ok(self.push(
            Tensor::from_vec(shape, data)?,
            Op::GaussianSample {
                mean: mean.0,
                log_std: log_std.0,
                noise: noise.to_vec(),
            },
            rg,
        ))
    }

    /// `x @ w + b` for a `[..., in]` input, `[in, out]` weight and `[out]` bias.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let h = self.matmul(x, w)?;
        self.add(h, b)
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a one-element output, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let is_leaf = matches!(node.op, Op::Input | Op::Param { .. } | Op::Constant);
            if is_leaf {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param { store, id } => Some((store, id, i)),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], target: usize, g: Tensor<T>) {
        if !self.nodes[target].requires_grad {
            return;
        }
        match &mut grads[target] {
            Some(existing) => existing.accumulate(&g),
            slot => *slot = Some(g),
        }
    }

    fn grad_like(&self, target: usize, data: Vec<T>) -> Tensor<T> {
        Tensor::from_vec(self.nodes[target].value.shape().to_vec(), data).expect("gradient shape")
    }

    /// Gradient for one operand of a possibly broadcast binary op.
    fn reduce_for(&self, operand: usize, full: Vec<T>) -> Tensor<T> {
        let n = self.nodes[operand].value.numel();
        let data = if n == full.len() {
            full
        } else {
            reduce_repeats(&full, n)
        };
        self.grad_like(operand, data)
    }

    fn expand(&self, operand: usize, len: usize) -> Vec<T> {
        let d = self.nodes[operand].value.data();
        if d.len() == len {
            d.to_vec()
        } else {
            (0..len).map(|i| d[i % d.len()]).collect()
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let gd = g.data();
        let out = node.value.data();
        match &node.op {
            Op::Constant | Op::Input | Op::Param { .. } => {}
            Op::Add(a, b) => {
                for &p in [a, b].iter() {
                    if self.rg(*p) {
                        let t = self.reduce_for(*p, gd.to_vec());
                        self.accumulate(grads, *p, t);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    let t = self.reduce_for(*a, gd.to_vec());
                    self.accumulate(grads, *a, t);
                }
                if self.rg(*b) {
                    let t = self.reduce_for(*b, gd.iter().map(|&x| -x).collect());
                    self.accumulate(grads, *b, t);
                }
            }
            Op::Mul(a, b) => {
                let n = gd.len();
                if self.rg(*a) {
                    let other = self.expand(*b, n);
                    let full = gd.iter().zip(&other).map(|(&x, &y)| x * y).collect();
                    let t = self.reduce_for(*a, full);
                    self.accumulate(grads, *a, t);
                }
                if self.rg(*b) {
                    let other = self.expand(*a, n);
                    let full = gd.iter().zip(&other).map(|(&x, &y)| x * y).collect();
                    let t = self.reduce_for(*b, full);
                    self.accumulate(grads, *b, t);
                }
            }
            Op::Min(a, b) => {
                let (da, db) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                let pick_a: Vec<bool> = da.iter().zip(db).map(|(x, y)| !(y < x)).collect();
                if self.rg(*a) {
                    let d = gd
                        .iter()
                        .zip(&pick_a)
                        .map(|(&x, &p)| if p { x } else { T::zero() })
                        .collect();
                    let t = self.grad_like(*a, d);
                    self.accumulate(grads, *a, t);
                }
                if self.rg(*b) {
                    let d = gd
                        .iter()
                        .zip(&pick_a)
                        .map(|(&x, &p)| if p { T::zero() } else { x })
                        .collect();
                    let t = self.grad_like(*b, d);
                    self.accumulate(grads, *b, t);
                }
            }
            Op::Scale(x, c) => {
                let t = self.grad_like(*x, gd.iter().map(|&v| v * *c).collect());
                self.accumulate(grads, *x, t);
            }
            Op::AddScalar(x) | Op::Reshape(x) => {
                let t = self.grad_like(*x, gd.to_vec());
                self.accumulate(grads, *x, t);
            }
            Op::Relu(x) => {
                let d = gd
                    .iter()
                    .zip(out)
                    .map(|(&v, &y)| if y > T::zero() { v } else { T::zero() })
                    .collect();
                let t = self.grad_like(*x, d);
                self.accumulate(grads, *x, t);
            }
            Op::Tanh(x) => {
                let d = gd
                    .iter()
                    .zip(out)
                    .map(|(&v, &y)| v * (T::one() - y * y))
                    .collect();
                let t = self.grad_like(*x, d);
                self.accumulate(grads, *x, t);
            }
            Op::Sigmoid(x) => {
                let d = gd
                    .iter()
                    .zip(out)
                    .map(|(&v, &y)| v * y * (T::one() - y))
                    .collect();
                let t = self.grad_like(*x, d);
                self.accumulate(grads, *x, t);
            }
            Op::Exp(x) => {
                let d = gd.iter().zip(out).map(|(&v, &y)| v * y).collect();
                let t = self.grad_like(*x, d);
                self.accumulate(grads, *x, t);
            }
            Op::Log(x) => {
                let eps = T::cast(LOG_EPS);
                let d = gd
                    .iter()
                    .zip(self.nodes[*x].value.data())
                    .map(|(&v, &a)| if a > eps { v / a } else { T::zero() })
                    .collect();
                let t = self.grad_like(*x, d);
                self.accumulate(grads, *x, t);
            }
            Op::Clamp(x, lo, hi) => {
                let d = gd
                    .iter()
                    .zip(self.nodes[*x].value.data())
                    .map(|(&v, &a)| if a >= *lo && a <= *hi { v } else { T::zero() })
                    .collect();
                let t = self.grad_like(*x, d);
                self.accumulate(grads, *x, t);
            }
            Op::MatMul(a, b) => self.matmul_backward(*a, *b, gd, grads),
            Op::Transpose(x) => {
                let s = node.value.shape();
                let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
                let t = self.grad_like(*x, transpose_last2(gd, r, c));
                self.accumulate(grads, *x, t);
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = split_axis(node.value.shape(), *axis);
                let mut d = vec![T::zero(); gd.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * len * inner + j * inner + i;
                        let dot: T = (0..len).map(|j| gd[at(j)] * out[at(j)]).sum();
                        for j in 0..len {
                            d[at(j)] = out[at(j)] * (gd[at(j)] - dot);
                        }
                    }
                }
                let t = self.grad_like(*x, d);
                self.accumulate(grads, *x, t);
            }
            Op::LayerNorm { x, inv_std } => {
                let width = *node.value.shape().last().unwrap();
                let w = T::cast(width as f64);
                let mut d = Vec::with_capacity(gd.len());
                for ((gr, yr), &inv) in gd.chunks(width).zip(out.chunks(width)).zip(inv_std) {
                    let mg = gr.iter().copied().sum::<T>() / w;
                    let mgy = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<T>() / w;
                    d.extend(gr.iter().zip(yr).map(|(&a, &y)| inv * (a - mg - y * mgy)));
                }
                let t = self.grad_like(*x, d);
                self.accumulate(grads, *x, t);
            }
            Op::Sum(x) => {
                let n = self.nodes[*x].value.numel();
                let t = self.grad_like(*x, vec![gd[0]; n]);
                self.accumulate(grads, *x, t);
            }
            Op::Mean(x) => {
                let n = self.nodes[*x].value.numel();
                let v = gd[0] / T::cast(n as f64);
                let t = self.grad_like(*x, vec![v; n]);
                self.accumulate(grads, *x, t);
            }
            Op::SumAxis { x, axis } => {
                let (outer, len, inner) = split_axis(self.nodes[*x].value.shape(), *axis);
                let mut d = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    for j in 0..len {
                        for i in 0..inner {
                            d[o * len * inner + j * inner + i] = gd[o * inner + i];
                        }
                    }
                }
                let t = self.grad_like(*x, d);
                self.accumulate(grads, *x, t);
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p].value.shape()[*axis];
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            d.extend_from_slice(&gd[base..base + len * inner]);
                        }
                        let t = self.grad_like(p, d);
                        self.accumulate(grads, p, t);
                    }
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let src_shape = self.nodes[*x].value.shape();
                let (outer, full, inner) = split_axis(src_shape, *axis);
                let len = node.value.shape()[*axis];
                let mut d = vec![T::zero(); outer * full * inner];
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    d[base..base + len * inner]
                        .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                let t = self.grad_like(*x, d);
                self.accumulate(grads, *x, t);
            }
            Op::GaussianSample {
                mean,
                log_std,
                noise,
            } => {
                if self.rg(*mean) {
                    let t = self.grad_like(*mean, gd.to_vec());
                    self.accumulate(grads, *mean, t);
                }
                if self.rg(*log_std) {
                    let (lo, hi) = (T::cast(LOG_STD_MIN), T::cast(LOG_STD_MAX));
                    let d = gd
                        .iter()
                        .zip(self.nodes[*log_std].value.data())
                        .zip(noise)
                        .map(|((&v, &s), &e)| {
                            if s >= lo && s <= hi {
                                v * s.exp() * e
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    let t = self.grad_like(*log_std, d);
                    self.accumulate(grads, *log_std, t);
                }
            }
        }
        Ok(())
    }

    fn matmul_backward(&self, a: usize, b: usize, gd: &[T], grads: &mut [Option<Tensor<T>>]) {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        let (sa, sb) = (va.shape(), vb.shape());
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let n = sb[sb.len() - 1];
        let batch: usize = sa[..sa.len() - 2].iter().product();
        let shared = sb.len() == 2;
        let (da, db) = (va.data(), vb.data());
        if self.rg(a) {
            // dA = dC @ B^T
            let mut ga = vec![T::zero(); da.len()];
            if shared {
                T::gemm(
                    batch * m,
                    n,
                    k,
                    T::one(),
                    gd,
                    n as isize,
                    1,
                    db,
                    1,
                    n as isize,
                    T::zero(),
                    &mut ga,
                    k as isize,
                    1,
                );
            } else {
                for i in 0..batch {
                    T::gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        &gd[i * m * n..(i + 1) * m * n],
                        n as isize,
                        1,
                        &db[i * k * n..(i + 1) * k * n],
                        1,
                        n as isize,
                        T::zero(),
                        &mut ga[i * m * k..(i + 1) * m * k],
                        k as isize,
                        1,
                    );
                }
            }
            let t = self.grad_like(a, ga);
            self.accumulate(grads, a, t);
        }
        if self.rg(b) {
            // dB = A^T @ dC
            let mut gb = vec![T::zero(); db.len()];
            if shared {
                T::gemm(
                    k,
                    batch * m,
                    n,
                    T::one(),
                    da,
                    1,
                    k as isize,
                    gd,
                    n as isize,
                    1,
                    T::zero(),
                    &mut gb,
                    n as isize,
                    1,
                );
            } else {
                for i in 0..batch {
                    T::gemm(
                        k,
                        m,
                        n,
                        T::one(),
                        &da[i * m * k..(i + 1) * m * k],
                        1,
                        k as isize,
                        &gd[i * m * n..(i + 1) * m * n],
                        n as isize,
                        1,
                        T::zero(),
                        &mut gb[i * k * n..(i + 1) * k * n],
                        n as isize,
                        1,
                    );
                }
            }
            let t = self.grad_like(b, gb);
            self.accumulate(grads, b, t);
        }
    }
}

fn transpose_last2<T: Scalar>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    let block = rows * cols;
    for (s, d) in src.chunks(block).zip(out.chunks_mut(block)) {
        for r in 0..rows {
            for c in 0..cols {
                d[c * rows + r] = s[r * cols + c];
            }
        }
    }
    out
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(u64, usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of an [`Graph::input`] or [`Graph::param`] leaf; `None` when
    /// the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// Gradients for every tensor of `store`, summed over all the places the
    /// graph used it. Unused parameters get `None`.
    pub fn param_grads(&self, store: &ParamStore<T>) -> Vec<Option<Tensor<T>>> {
        let mut out: Vec<Option<Tensor<T>>> = (0..store.len()).map(|_| None).collect();
        for &(sid, id, node) in &self.params {
            if sid != store.store_id() {
                continue;
            }
            if let Some(g) = &self.grads[node] {
                match &mut out[id] {
                    Some(acc) => acc.accumulate(g),
                    slot => *slot = Some(g.clone()),
                }
            }
        }
        out
    }
}
