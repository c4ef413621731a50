use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::ConvGeometry;
use super::{ParamId, ParamStore, Real, Tensor, BN_EPS, BN_MOMENTUM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

/// Batch-norm and dropout behaviour of a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Value<T> {
    Owned(Tensor<T>),
    Param(ParamId),
}

enum Op<T> {
    Leaf,
    Conv2d { x: NodeId, w: NodeId, b: Option<NodeId>, geom: ConvGeometry, cols: Vec<T> },
    Dense { x: NodeId, w: NodeId, b: Option<NodeId> },
    BatchNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Vec<T>, inv_std: Vec<T>, training: bool },
    Relu { x: NodeId },
    Dropout { x: NodeId, mask: Vec<T> },
    Add { a: NodeId, b: NodeId },
    MulChannel { x: NodeId, v: NodeId },
    Upsample2x { x: NodeId },
    GlobalAvgPool { x: NodeId },
    ChannelDot { x: NodeId, v: NodeId },
    OuterDot { a: NodeId, b: NodeId },
    AddScalar { x: NodeId, s: NodeId },
    Reshape { x: NodeId },
    Mse { pred: NodeId, target: NodeId },
    Sum { x: NodeId },
}

struct Node<T> {
    value: Value<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients of a scalar with respect to parameters and variable leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    params: Vec<Option<Tensor<T>>>,
    leaves: Vec<(NodeId, Tensor<T>)>,
}

impl<T: Real> Gradients<T> {
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    pub fn node(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.leaves.iter().find(|(n, _)| *n == id).map(|(_, t)| t)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params.iter().enumerate().filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    /// Euclidean norm over every parameter gradient.
    pub fn global_norm(&self) -> f64 {
        self.params()
            .flat_map(|(_, g)| g.data().iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}

/// Tape of one forward pass. Parameters are borrowed from the store, never
/// copied; batch-norm running statistics computed in training mode are
/// collected as buffer updates for the caller to apply.
pub struct Graph<'s, T> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
    mode: Mode,
    grad_enabled: bool,
    rng: ChaCha8Rng,
    buffer_updates: Vec<(ParamId, Vec<T>)>,
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::shape(op, a, b))
    }
}

fn accumulate<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

impl<'s, T: Real> Graph<'s, T> {
    /// A differentiable pass. `seed` drives dropout masks.
    pub fn new(store: &'s ParamStore<T>, mode: Mode, seed: u64) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            mode,
            grad_enabled: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            buffer_updates: Vec::new(),
        }
    }

    /// An evaluation-mode pass that records nothing for backward.
    pub fn inference(store: &'s ParamStore<T>) -> Self {
        Self { grad_enabled: false, ..Self::new(store, Mode::Eval, 0) }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(p) => self.store.get(*p),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value: Value::Owned(value), op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input.
    pub fn input(&mut self, t: Tensor<T>) -> NodeId {
        self.push(t, Op::Leaf, false)
    }

    /// Input whose gradient is reported by [`backward`](Self::backward).
    pub fn variable(&mut self, t: Tensor<T>) -> NodeId {
        let g = self.grad_enabled;
        self.push(t, Op::Leaf, g)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let requires_grad = self.grad_enabled && self.store.is_trainable(id);
        self.nodes.push(Node { value: Value::Param(id), op: Op::Leaf, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// Cross-correlation of `N×C×H×W` with `F×C×k×k` kernels and optional bias `F`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, stride: usize, pad: usize) -> Result<NodeId> {
        let (n, c, h, wd) = self.value(x).dims4("conv2d")?;
        let (f, wc, k, k2) = self.value(w).dims4("conv2d")?;
        if wc != c || k != k2 {
            return Err(Error::shape("conv2d", &[f, c, k, k], self.value(w).shape()));
        }
        if let Some(b) = b {
            same_shape("conv2d bias", &[f], self.value(b).shape())?;
        }
        let geom = ConvGeometry::new(c, h, wd, k, stride, pad)?;
        let (rows, l) = (geom.rows(), geom.positions());
        let keep_cols = self.requires(w) && !geom.is_pointwise();
        let requires_grad = self.requires(x) || self.requires(w) || b.is_some_and(|b| self.requires(b));

        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = b.map(|b| self.value(b).data());
        let mut out = vec![T::zero(); n * f * l];
        let mut cols = if keep_cols { vec![T::zero(); n * rows * l] } else { Vec::new() };
        let mut scratch = if keep_cols || geom.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * l] };
        for s in 0..n {
            let xs = &xv[s * c * h * wd..(s + 1) * c * h * wd];
            let lowered: &[T] = if geom.is_pointwise() {
                xs
            } else if keep_cols {
                let dst = &mut cols[s * rows * l..(s + 1) * rows * l];
                geom.im2col(xs, dst);
                dst
            } else {
                geom.im2col(xs, &mut scratch);
                &scratch
            };
            let os = &mut out[s * f * l..(s + 1) * f * l];
            T::gemm(f, rows, l, wv, false, lowered, false, os, false);
            if let Some(bv) = bv {
                for (row, &bias) in os.chunks_exact_mut(l).zip(bv) {
                    row.iter_mut().for_each(|v| *v += bias);
                }
            }
        }
        let out = Tensor::new(&[n, f, geom.ho, geom.wo], out)?;
        Ok(self.push(out, Op::Conv2d { x, w, b, geom, cols }, requires_grad))
    }

    /// `N×I · I×O + O`.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (n, i) = self.value(x).dims2("dense")?;
        let (wi, o) = self.value(w).dims2("dense")?;
        if wi != i {
            return Err(Error::shape("dense", &[i, o], &[wi, o]));
        }
        if let Some(b) = b {
            same_shape("dense bias", &[o], self.value(b).shape())?;
        }
        let mut out = vec![T::zero(); n * o];
        T::gemm(n, i, o, self.value(x).data(), false, self.value(w).data(), false, &mut out, false);
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_exact_mut(o) {
                accumulate(row, bv);
            }
        }
        let requires_grad = self.requires(x) || self.requires(w) || b.is_some_and(|b| self.requires(b));
        Ok(self.push(Tensor::new(&[n, o], out)?, Op::Dense { x, w, b }, requires_grad))
    }

    /// Per-channel normalization of `N×C(×H×W)`. Training mode uses biased
    /// batch statistics and records updated running statistics; evaluation
    /// mode uses the running statistics.
    pub fn batch_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, running_mean: ParamId, running_var: ParamId) -> Result<NodeId> {
        let shape = self.value(x).shape().to_vec();
        if shape.len() < 2 {
            return Err(Error::shape("batch_norm", &[0, 0], &shape));
        }
        let (n, c) = (shape[0], shape[1]);
        let hw: usize = shape[2..].iter().product();
        for id in [gamma, beta] {
            same_shape("batch_norm", &[c], self.value(id).shape())?;
        }
        for id in [running_mean, running_var] {
            same_shape("batch_norm", &[c], self.store.get(id).shape())?;
        }
        let training = self.mode == Mode::Train;
        let m = (n * hw) as f64;
        let xv = self.value(x).data();
        let (mean, var): (Vec<T>, Vec<T>) = if training {
            (0..c)
                .map(|ch| {
                    let plane = || (0..n).flat_map(move |s| xv[(s * c + ch) * hw..(s * c + ch + 1) * hw].iter().copied());
                    let mu = plane().map(T::as_f64).sum::<f64>() / m;
                    let var = plane().map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>() / m;
                    (T::of(mu), T::of(var))
                })
                .unzip()
        } else {
            (self.store.get(running_mean).data().to_vec(), self.store.get(running_var).data().to_vec())
        };
        let eps = T::of(BN_EPS);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for s in 0..n {
            for ch in 0..c {
                let r = (s * c + ch) * hw..(s * c + ch + 1) * hw;
                for i in r {
                    let xh = (xv[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = g[ch] * xh + bt[ch];
                }
            }
        }
        if training {
            let mom = T::of(BN_MOMENTUM);
            let blend = |old: &[T], new: &[T]| old.iter().zip(new).map(|(&o, &b)| mom * o + (T::one() - mom) * b).collect::<Vec<T>>();
            let rm = blend(self.store.get(running_mean).data(), &mean);
            let rv = blend(self.store.get(running_var).data(), &var);
            self.buffer_updates.push((running_mean, rm));
            self.buffer_updates.push((running_var, rv));
        }
        let requires_grad = self.requires(x) || self.requires(gamma) || self.requires(beta);
        if !requires_grad {
            xhat = Vec::new();
        }
        Ok(self.push(Tensor::new(&shape, out)?, Op::BatchNorm { x, gamma, beta, xhat, inv_std, training }, requires_grad))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        // NaN passes through so divergence stays visible
        let out = Tensor::from_fn(t.shape(), |i| {
            let v = t.data()[i];
            if v < T::zero() { T::zero() } else { v }
        });
        let r = self.requires(x);
        self.push(out, Op::Relu { x }, r)
    }

    /// Inverted dropout; the identity in evaluation mode or at rate 0.
    pub fn dropout(&mut self, x: NodeId, rate: f64) -> NodeId {
        if self.mode == Mode::Eval || rate <= 0.0 {
            return x;
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let n = self.value(x).len();
        let mask: Vec<T> = (0..n).map(|_| if self.rng.random::<f64>() < rate { T::zero() } else { keep }).collect();
        let t = self.value(x);
        let out = Tensor::from_fn(t.shape(), |i| t.data()[i] * mask[i]);
        let r = self.requires(x);
        self.push(out, Op::Dropout { x, mask }, r)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape("add", ta.shape(), tb.shape())?;
        let out = Tensor::from_fn(ta.shape(), |i| ta.data()[i] + tb.data()[i]);
        let r = self.requires(a) || self.requires(b);
        Ok(self.push(out, Op::Add { a, b }, r))
    }

    /// `N×C×H×W ∘ N×C`, the vector broadcast over spatial positions.
    pub fn mul_channel(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (n, c, h, w) = self.value(x).dims4("mul_channel")?;
        same_shape("mul_channel", &[n, c], self.value(v).shape())?;
        let (xv, vv) = (self.value(x).data(), self.value(v).data());
        let hw = h * w;
        let out = Tensor::from_fn(&[n, c, h, w], |i| xv[i] * vv[i / hw]);
        let r = self.requires(x) || self.requires(v);
        Ok(self.push(out, Op::MulChannel { x, v }, r))
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2x(&mut self, x: NodeId) -> Result<NodeId> {
        let (n, c, h, w) = self.value(x).dims4("upsample2x")?;
        let xv = self.value(x).data();
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); n * c * h2 * w2];
        for (plane, dst) in xv.chunks_exact(h * w).zip(out.chunks_exact_mut(h2 * w2)) {
            for (src, rows) in plane.chunks_exact(w).zip(dst.chunks_exact_mut(2 * w2)) {
                let (top, bottom) = rows.split_at_mut(w2);
                for (j, &v) in src.iter().enumerate() {
                    top[2 * j] = v;
                    top[2 * j + 1] = v;
                }
                bottom.copy_from_slice(top);
            }
        }
        let out = Tensor::new(&[n, c, h2, w2], out)?;
        let r = self.requires(x);
        Ok(self.push(out, Op::Upsample2x { x }, r))
    }

    /// Spatial mean, `N×C×H×W → N×C`.
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let (n, c, h, w) = self.value(x).dims4("global_avg_pool")?;
        let hw = h * w;
        let xv = self.value(x).data();
        let inv = T::of(1.0 / hw as f64);
        let out = Tensor::from_fn(&[n, c], |i| xv[i * hw..(i + 1) * hw].iter().copied().sum::<T>() * inv);
        let r = self.requires(x);
        Ok(self.push(out, Op::GlobalAvgPool { x }, r))
    }

    /// Dot product along the channel axis, `N×C×H×W · N×C → N×1×H×W`.
    pub fn channel_dot(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (n, c, h, w) = self.value(x).dims4("channel_dot")?;
        same_shape("channel_dot", &[n, c], self.value(v).shape())?;
        let (xv, vv) = (self.value(x).data(), self.value(v).data());
        let hw = h * w;
        let mut out = vec![T::zero(); n * hw];
        for s in 0..n {
            let o = &mut out[s * hw..(s + 1) * hw];
            for ch in 0..c {
                let a = vv[s * c + ch];
                let plane = &xv[(s * c + ch) * hw..(s * c + ch + 1) * hw];
                for (y, &p) in o.iter_mut().zip(plane) {
                    *y += a * p;
                }
            }
        }
        let r = self.requires(x) || self.requires(v);
        Ok(self.push(Tensor::new(&[n, 1, h, w], out)?, Op::ChannelDot { x, v }, r))
    }

    /// `N×K · (P×K)ᵀ → N×P`: every sample's vector dotted with every row.
    pub fn outer_dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.value(a).dims2("outer_dot")?;
        let (p, kb) = self.value(b).dims2("outer_dot")?;
        if kb != k {
            return Err(Error::shape("outer_dot", &[p, k], &[p, kb]));
        }
        let mut out = vec![T::zero(); n * p];
        T::gemm(n, k, p, self.value(a).data(), false, self.value(b).data(), true, &mut out, false);
        let r = self.requires(a) || self.requires(b);
        Ok(self.push(Tensor::new(&[n, p], out)?, Op::OuterDot { a, b }, r))
    }

    /// Adds a one-element tensor to every entry.
    pub fn add_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        same_shape("add_scalar", &[1], self.value(s).shape())?;
        let sv = self.value(s).data()[0];
        let t = self.value(x);
        let out = Tensor::from_fn(t.shape(), |i| t.data()[i] + sv);
        let r = self.requires(x) || self.requires(s);
        Ok(self.push(out, Op::AddScalar { x, s }, r))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.value(x).clone().reshaped(shape)?;
        let r = self.requires(x);
        Ok(self.push(out, Op::Reshape { x }, r))
    }

    /// Mean squared difference, a one-element tensor.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let (p, t) = (self.value(pred), self.value(target));
        same_shape("mse", p.shape(), t.shape())?;
        let m = p.len() as f64;
        let s: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
        let r = self.requires(pred) || self.requires(target);
        Ok(self.push(Tensor::scalar(T::of(s / m)), Op::Mse { pred, target }, r))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().copied().sum::<T>();
        let r = self.requires(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, r)
    }

    /// Running-statistics updates recorded so far by training-mode batch norms.
    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Vec<T>)> {
        core::mem::take(&mut self.buffer_updates)
    }

    /// Reverse pass from a one-element `loss`. Consumes the tape.
    pub fn backward(self, loss: NodeId) -> Result<Gradients<T>> {
        let shape = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(Error::NotScalar(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.requires(loss) {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..self.nodes.len()).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.backprop(i, &dy, &mut grads)?;
        }
        let mut params: Vec<Option<Tensor<T>>> = (0..self.store.len()).map(|_| None).collect();
        let mut leaves = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let Some(g) = grads[i].take() else { continue };
            match &node.value {
                Value::Param(p) => {
                    let slot = params[p.0].get_or_insert_with(|| Tensor::zeros(self.store.get(*p).shape()));
                    accumulate(slot.data_mut(), &g);
                }
                Value::Owned(t) => leaves.push((NodeId(i), Tensor::new(t.shape(), g)?)),
            }
        }
        Ok(Gradients { params, leaves })
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], id: NodeId) -> Option<&'g mut Vec<T>> {
        if !self.requires(id) {
            return None;
        }
        let n = self.value(id).len();
        Some(grads[id.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn backprop(&self, i: usize, dy: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom, cols } => {
                let (n, f) = (self.value(*x).shape()[0], self.value(*w).shape()[0]);
                let (rows, l) = (geom.rows(), geom.positions());
                let chw = geom.c * geom.h * geom.w;
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                if let Some(dw) = self.grad_slot(grads, *w) {
                    for s in 0..n {
                        let lowered = if geom.is_pointwise() { &xv[s * chw..(s + 1) * chw] } else { &cols[s * rows * l..(s + 1) * rows * l] };
                        T::gemm(f, l, rows, &dy[s * f * l..(s + 1) * f * l], false, lowered, true, dw, true);
                    }
                }
                if let Some(b) = b {
                    if let Some(db) = self.grad_slot(grads, *b) {
                        for s in 0..n {
                            for (ch, row) in dy[s * f * l..(s + 1) * f * l].chunks_exact(l).enumerate() {
                                db[ch] += row.iter().copied().sum::<T>();
                            }
                        }
                    }
                }
                if let Some(dx) = self.grad_slot(grads, *x) {
                    let mut dcols = if geom.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * l] };
                    for s in 0..n {
                        let dys = &dy[s * f * l..(s + 1) * f * l];
                        let dxs = &mut dx[s * chw..(s + 1) * chw];
                        if geom.is_pointwise() {
                            T::gemm(rows, f, l, wv, true, dys, false, dxs, true);
                        } else {
                            T::gemm(rows, f, l, wv, true, dys, false, &mut dcols, false);
                            geom.col2im_add(&dcols, dxs);
                        }
                    }
                }
            }
            Op::Dense { x, w, b } => {
                let (n, inp) = self.value(*x).dims2("dense")?;
                let o = self.value(*w).shape()[1];
                if let Some(dw) = self.grad_slot(grads, *w) {
                    T::gemm(inp, n, o, self.value(*x).data(), true, dy, false, dw, true);
                }
                if let Some(b) = b {
                    if let Some(db) = self.grad_slot(grads, *b) {
                        for row in dy.chunks_exact(o) {
                            accumulate(db, row);
                        }
                    }
                }
                if let Some(dx) = self.grad_slot(grads, *x) {
                    T::gemm(n, o, inp, dy, false, self.value(*w).data(), true, dx, true);
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, training } => {
                let shape = self.value(*x).shape();
                let (n, c) = (shape[0], shape[1]);
                let hw: usize = shape[2..].iter().product();
                let g = self.value(*gamma).data();
                let planes = |ch: usize| (0..n).flat_map(move |s| (s * c + ch) * hw..(s * c + ch + 1) * hw);
                let sum_dy: Vec<T> = (0..c).map(|ch| planes(ch).map(|k| dy[k]).sum()).collect();
                let sum_dy_xhat: Vec<T> = (0..c).map(|ch| planes(ch).map(|k| dy[k] * xhat[k]).sum()).collect();
                if let Some(dg) = self.grad_slot(grads, *gamma) {
                    accumulate(dg, &sum_dy_xhat);
                }
                if let Some(db) = self.grad_slot(grads, *beta) {
                    accumulate(db, &sum_dy);
                }
                if let Some(dx) = self.grad_slot(grads, *x) {
                    let m = T::of((n * hw) as f64);
                    for ch in 0..c {
                        let scale = g[ch] * inv_std[ch];
                        for k in planes(ch) {
                            dx[k] += if *training {
                                scale / m * (m * dy[k] - sum_dy[ch] - xhat[k] * sum_dy_xhat[ch])
                            } else {
                                scale * dy[k]
                            };
                        }
                    }
                }
            }
            Op::Relu { x } => {
                let xv = self.value(*x).data();
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, &g), &v) in dx.iter_mut().zip(dy).zip(xv) {
                        if v > T::zero() {
                            *d += g;
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, &g), &m) in dx.iter_mut().zip(dy).zip(mask) {
                        *d += g * m;
                    }
                }
            }
            Op::Add { a, b } => {
                for id in [*a, *b] {
                    if let Some(d) = self.grad_slot(grads, id) {
                        accumulate(d, dy);
                    }
                }
            }
            Op::MulChannel { x, v } => {
                let (_, _, h, w) = self.value(*x).dims4("mul_channel")?;
                let hw = h * w;
                let (xv, vv) = (self.value(*x).data(), self.value(*v).data());
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for (k, d) in dx.iter_mut().enumerate() {
                        *d += dy[k] * vv[k / hw];
                    }
                }
                if let Some(dv) = self.grad_slot(grads, *v) {
                    for (j, d) in dv.iter_mut().enumerate() {
                        *d += (j * hw..(j + 1) * hw).map(|k| dy[k] * xv[k]).sum::<T>();
                    }
                }
            }
            Op::Upsample2x { x } => {
                let (_, _, h, w) = self.value(*x).dims4("upsample2x")?;
                if let Some(dx) = self.grad_slot(grads, *x) {
                    let w2 = 2 * w;
                    for (plane, src) in dx.chunks_exact_mut(h * w).zip(dy.chunks_exact(4 * h * w)) {
                        for (row, rows) in plane.chunks_exact_mut(w).zip(src.chunks_exact(2 * w2)) {
                            let (top, bottom) = rows.split_at(w2);
                            for (j, d) in row.iter_mut().enumerate() {
                                *d += top[2 * j] + top[2 * j + 1] + bottom[2 * j] + bottom[2 * j + 1];
                            }
                        }
                    }
                }
            }
            Op::GlobalAvgPool { x } => {
                let (_, _, h, w) = self.value(*x).dims4("global_avg_pool")?;
                let hw = h * w;
                let inv = T::of(1.0 / hw as f64);
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for (k, d) in dx.iter_mut().enumerate() {
                        *d += dy[k / hw] * inv;
                    }
                }
            }
            Op::ChannelDot { x, v } => {
                let (n, c, h, w) = self.value(*x).dims4("channel_dot")?;
                let hw = h * w;
                let (xv, vv) = (self.value(*x).data(), self.value(*v).data());
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for s in 0..n {
                        for ch in 0..c {
                            let a = vv[s * c + ch];
                            let o = (s * c + ch) * hw;
                            for p in 0..hw {
                                dx[o + p] += a * dy[s * hw + p];
                            }
                        }
                    }
                }
                if let Some(dv) = self.grad_slot(grads, *v) {
                    for s in 0..n {
                        for ch in 0..c {
                            let o = (s * c + ch) * hw;
                            dv[s * c + ch] += (0..hw).map(|p| xv[o + p] * dy[s * hw + p]).sum::<T>();
                        }
                    }
                }
            }
            Op::OuterDot { a, b } => {
                let (n, k) = self.value(*a).dims2("outer_dot")?;
                let p = self.value(*b).shape()[0];
                if let Some(da) = self.grad_slot(grads, *a) {
                    T::gemm(n, p, k, dy, false, self.value(*b).data(), false, da, true);
                }
                if let Some(db) = self.grad_slot(grads, *b) {
                    T::gemm(p, n, k, dy, true, self.value(*a).data(), false, db, true);
                }
            }
            Op::AddScalar { x, s } => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    accumulate(dx, dy);
                }
                if let Some(ds) = self.grad_slot(grads, *s) {
                    ds[0] += dy.iter().copied().sum::<T>();
                }
            }
            Op::Reshape { x } => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    accumulate(dx, dy);
                }
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                let scale = T::of(2.0 / p.len() as f64) * dy[0];
                if let Some(dp) = self.grad_slot(grads, *pred) {
                    for ((d, &a), &b) in dp.iter_mut().zip(p).zip(t) {
                        *d += scale * (a - b);
                    }
                }
                if let Some(dt) = self.grad_slot(grads, *target) {
                    for ((d, &a), &b) in dt.iter_mut().zip(p).zip(t) {
                        *d -= scale * (a - b);
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    dx.iter_mut().for_each(|d| *d += dy[0]);
                }
            }
        }
        Ok(())
    }
}
