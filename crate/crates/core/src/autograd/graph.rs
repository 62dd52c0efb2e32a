//! Reverse-mode tape.
//!
//! Every operation appends a node; node indices are therefore a topological
//! order and backward simply walks them in reverse. A node keeps its saved
//! intermediates only when some input requires a gradient.

use super::kernels::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col, ConvGeom};
use super::params::{ParamId, ParamStore};
use super::tensor::{strides, Tensor};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::snn::{lif_scan, lif_scan_backward, LifParams, SpikeMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2dSpec {
    pub fn strided(stride: usize) -> Self {
        Conv2dSpec {
            stride,
            padding: 0,
            groups: 1,
        }
    }
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Self::strided(1)
    }
}

const NORM_EPS: f64 = 1e-5;

enum Op<F> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, F),
    ScaleBy(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    MatMul {
        a: NodeId,
        b: NodeId,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeom,
        cols: Vec<F>,
    },
    Reshape(NodeId),
    /// `src[i]` is the input offset of output element `i`.
    Gather {
        input: NodeId,
        src: Vec<usize>,
    },
    /// `dst[i]` is the output offset input element `i` is added into.
    Reduce {
        input: NodeId,
        dst: Vec<usize>,
        scale: F,
    },
    Softmax(NodeId),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Vec<F>,
    },
    Lif {
        input: NodeId,
        params: LifParams,
        mode: SpikeMode,
        t_steps: usize,
        h: Vec<F>,
    },
    Normalize {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<F>,
        inv_std: Vec<F>,
    },
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
    grad: Option<Tensor<F>>,
    param: Option<ParamId>,
}

/// A recording of one forward computation.
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    recording: bool,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A graph that never records operations. Forward values are identical.
    pub fn without_grad() -> Self {
        Graph {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, inputs: &[NodeId]) -> NodeId {
        let requires_grad = self.recording && inputs.iter().any(|&i| self.nodes[i.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
            param: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> NodeId {
        self.push(value, Op::Leaf, &[])
    }

    /// Leaf that accumulates a gradient on [`Graph::backward`].
    pub fn variable(&mut self, value: Tensor<F>) -> NodeId {
        let id = self.push(value, Op::Leaf, &[]);
        self.nodes[id.0].requires_grad = self.recording;
        id
    }

    /// Leaf holding a copy of a stored parameter.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> NodeId {
        let p = store.get(id);
        let node = if p.requires_grad() {
            self.variable(p.value().clone())
        } else {
            self.constant(p.value().clone())
        };
        self.nodes[node.0].param = Some(id);
        node
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<F>> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Gradients of parameter leaves, in node order.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor<F>)> {
        self.nodes
            .iter()
            .filter_map(|n| Some((n.param?, n.grad.as_ref()?)))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(F, F) -> F) -> Tensor<F> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape(), data).expect("same shape")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: NodeId, s: F) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    /// Multiplies every entry by a one-element tensor.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = self
            .value(s)
            .item()
            .ok_or_else(|| shape_err("scale_by", self.shape(a), self.shape(s)))?;
        let v = self.value(a).map(|x| x * sv);
        Ok(self.push(v, Op::ScaleBy(a, s), &[a, s]))
    }

    /// Adds a `[O]` bias along the last axis of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let o = *self.shape(a).last().unwrap_or(&0);
        if self.shape(bias) != [o] {
            return Err(shape_err("add_bias", self.shape(a), self.shape(bias)));
        }
        let b = self.value(bias).data().to_vec();
        let mut v = self.value(a).clone();
        for row in v.data_mut().chunks_exact_mut(o) {
            for (x, &bb) in row.iter_mut().zip(&b) {
                *x += bb;
            }
        }
        Ok(self.push(v, Op::AddBias(a, bias), &[a, bias]))
    }

    /// `[.., M, K] x [.., K, N]` with identical leading dimensions.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sa.len() != sb.len() || sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let r = sa.len();
        let (m, k, k2, n) = (sa[r - 2], sa[r - 1], sb[r - 2], sb[r - 1]);
        if k != k2 {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let batch: usize = sa[..r - 2].iter().product();
        let mut out = vec![F::zero(); batch * m * n];
        {
            let (va, vb) = (self.value(a).data(), self.value(b).data());
            for bi in 0..batch {
                gemm_nn(
                    m,
                    k,
                    n,
                    &va[bi * m * k..(bi + 1) * m * k],
                    &vb[bi * k * n..(bi + 1) * k * n],
                    &mut out[bi * m * n..(bi + 1) * m * n],
                );
            }
        }
        let mut shape = sa[..r - 2].to_vec();
        shape.extend([m, n]);
        let v = Tensor::new(&shape, out)?;
        Ok(self.push(v, Op::MatMul { a, b, batch, m, k, n }, &[a, b]))
    }

    /// Grouped convolution of `[B, C, H, W]` with weights `[O, C/groups, kh, kw]`
    /// and optional bias `[O]`, lowered to patch extraction plus matmul.
    pub fn conv2d(&mut self, input: NodeId, weight: NodeId, bias: Option<NodeId>, spec: Conv2dSpec) -> Result<NodeId> {
        let si = self.shape(input).to_vec();
        let sw = self.shape(weight).to_vec();
        if si.len() != 4 || sw.len() != 4 {
            return Err(shape_err("conv2d", &si, &sw));
        }
        let (b, c, h, w) = (si[0], si[1], si[2], si[3]);
        let (o, cg, kh, kw) = (sw[0], sw[1], sw[2], sw[3]);
        let groups = spec.groups.max(1);
        if c % groups != 0 || o % groups != 0 || cg != c / groups || spec.stride == 0 {
            return Err(shape_err("conv2d", &si, &sw));
        }
        if h + 2 * spec.padding < kh || w + 2 * spec.padding < kw {
            return Err(shape_err("conv2d", &si, &sw));
        }
        if let Some(bias) = bias {
            if self.shape(bias) != [o] {
                return Err(shape_err("conv2d bias", &sw, self.shape(bias)));
            }
        }
        let geom = ConvGeom {
            batch: b,
            in_channels: c,
            height: h,
            width: w,
            out_channels: o,
            kernel_h: kh,
            kernel_w: kw,
            stride: spec.stride,
            padding: spec.padding,
            groups,
            out_h: (h + 2 * spec.padding - kh) / spec.stride + 1,
            out_w: (w + 2 * spec.padding - kw) / spec.stride + 1,
        };
        let cols = im2col(&geom, self.value(input).data());
        let rows = geom.rows();
        let patch = geom.patch();
        let og = geom.out_per_group();
        let hw = geom.out_h * geom.out_w;
        let mut out = vec![F::zero(); b * o * hw];
        {
            let wv = self.value(weight).data();
            let bv = bias.map(|id| self.value(id).data());
            let mut tmp = vec![F::zero(); rows * og];
            for g in 0..groups {
                tmp.iter_mut().for_each(|v| *v = F::zero());
                gemm_nt(
                    rows,
                    patch,
                    og,
                    &cols[g * rows * patch..(g + 1) * rows * patch],
                    &wv[g * og * patch..(g + 1) * og * patch],
                    &mut tmp,
                );
                for row in 0..rows {
                    let (bi, pix) = (row / hw, row % hw);
                    for oc in 0..og {
                        let ch = g * og + oc;
                        let add = bv.map(|bv| bv[ch]).unwrap_or_else(F::zero);
                        out[(bi * o + ch) * hw + pix] = tmp[row * og + oc] + add;
                    }
                }
            }
        }
        let v = Tensor::new(&[b, o, geom.out_h, geom.out_w], out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(
            v,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            },
            &inputs,
        ))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(v, Op::Reshape(a), &[a]))
    }

    /// Collapses everything after the first axis.
    pub fn flatten(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a);
        let lead = *s.first().unwrap_or(&1);
        let rest: usize = s.iter().skip(1).product();
        self.reshape(a, &[lead, rest])
    }

    /// General axis permutation; output axis `i` is input axis `axes[i]`.
    pub fn transpose(&mut self, a: NodeId, axes: &[usize]) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        let mut seen = vec![false; s.len()];
        if axes.len() != s.len() || axes.iter().any(|&x| x >= s.len() || std::mem::replace(&mut seen[x], true)) {
            return Err(shape_err("transpose", &s, axes));
        }
        let in_strides = strides(&s);
        let out_shape: Vec<usize> = axes.iter().map(|&x| s[x]).collect();
        let n = self.value(a).len();
        let mut src = Vec::with_capacity(n);
        let mut idx = vec![0usize; s.len()];
        for _ in 0..n {
            src.push(idx.iter().zip(axes).map(|(&i, &ax)| i * in_strides[ax]).sum());
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < out_shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        let data = src.iter().map(|&i| self.value(a).data()[i]).collect();
        let v = Tensor::new(&out_shape, data)?;
        Ok(self.push(v, Op::Gather { input: a, src }, &[a]))
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&mut self, a: NodeId) -> Result<NodeId> {
        let r = self.shape(a).len();
        if r < 2 {
            return Err(shape_err("transpose_last", self.shape(a), &[]));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.transpose(a, &axes)
    }

    fn reduce(&mut self, a: NodeId, axes: &[usize], mean: bool) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if axes.iter().any(|&x| x >= s.len()) {
            return Err(shape_err("reduce", &s, axes));
        }
        let keep: Vec<usize> = (0..s.len()).filter(|d| !axes.contains(d)).collect();
        let out_shape: Vec<usize> = keep.iter().map(|&d| s[d]).collect();
        let out_strides = strides(&out_shape);
        let count: usize = axes.iter().map(|&d| s[d]).product::<usize>().max(1);
        let n = self.value(a).len();
        let mut dst = Vec::with_capacity(n);
        let mut idx = vec![0usize; s.len()];
        for _ in 0..n {
            dst.push(keep.iter().zip(&out_strides).map(|(&d, &st)| idx[d] * st).sum());
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < s[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        let scale = if mean {
            F::one() / F::from_usize(count)
        } else {
            F::one()
        };
        let mut out = vec![F::zero(); out_shape.iter().product()];
        for (&x, &d) in self.value(a).data().iter().zip(&dst) {
            out[d] += x;
        }
        out.iter_mut().for_each(|v| *v *= scale);
        let v = Tensor::new(&out_shape, out)?;
        Ok(self.push(v, Op::Reduce { input: a, dst, scale }, &[a]))
    }

    pub fn sum(&mut self, a: NodeId, axes: &[usize]) -> Result<NodeId> {
        self.reduce(a, axes, false)
    }

    pub fn mean(&mut self, a: NodeId, axes: &[usize]) -> Result<NodeId> {
        self.reduce(a, axes, true)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let axes: Vec<usize> = (0..self.shape(a).len()).collect();
        self.reduce(a, &axes, false).expect("valid axes")
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let n = *self
            .shape(a)
            .last()
            .ok_or_else(|| shape_err("softmax", self.shape(a), &[]))?;
        let mut v = self.value(a).clone();
        for row in v.data_mut().chunks_exact_mut(n) {
            let max = row.iter().fold(F::neg_infinity(), |m, &x| m.max(x));
            let mut total = F::zero();
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        }
        Ok(self.push(v, Op::Softmax(a), &[a]))
    }

    /// Mean cross-entropy of `[B, C]` logits against class indices.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != targets.len() {
            return Err(shape_err("cross_entropy", &s, &[targets.len()]));
        }
        let c = s[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::arg(format!("target class {bad} outside {c} classes")));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = F::zero();
        for (row, &t) in probs.chunks_exact_mut(c).zip(targets) {
            let max = row.iter().fold(F::neg_infinity(), |m, &x| m.max(x));
            let lse = row.iter().map(|&x| (x - max).exp()).sum::<F>().ln() + max;
            loss += lse - row[t];
            row.iter_mut().for_each(|x| *x = (*x - lse).exp());
        }
        loss /= F::from_usize(targets.len().max(1));
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// LIF neurons over a time-major input `[T, ...]`, starting from rest.
    pub fn lif(&mut self, input: NodeId, params: &LifParams, mode: SpikeMode) -> Result<NodeId> {
        let shape = self.shape(input).to_vec();
        let t_steps = *shape.first().ok_or_else(|| shape_err("lif", &shape, &[]))?;
        if t_steps == 0 {
            return Err(shape_err("lif", &shape, &[]));
        }
        let (spikes, h) = lif_scan(self.value(input).data(), t_steps, params, mode);
        let v = Tensor::new(&shape, spikes)?;
        Ok(self.push(
            v,
            Op::Lif {
                input,
                params: *params,
                mode,
                t_steps,
                h,
            },
            &[input],
        ))
    }

    /// Per-column standardization of `[R, C]` followed by a `[C]` affine map.
    pub fn normalize(&mut self, input: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let s = self.shape(input).to_vec();
        if s.len() != 2 || self.shape(gamma) != [s[1]] || self.shape(beta) != [s[1]] {
            return Err(shape_err("normalize", &s, self.shape(gamma)));
        }
        let (r, c) = (s[0], s[1]);
        let x = self.value(input).data();
        let rf = F::from_usize(r.max(1));
        let mut mean = vec![F::zero(); c];
        for row in x.chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rf);
        let mut var = vec![F::zero(); c];
        for row in x.chunks_exact(c) {
            for j in 0..c {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        let eps = F::from_f64(NORM_EPS);
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v / rf + eps).sqrt()).collect();
        let mut xhat = vec![F::zero(); r * c];
        for (i, row) in x.chunks_exact(c).enumerate() {
            for j in 0..c {
                xhat[i * c + j] = (row[j] - mean[j]) * inv_std[j];
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let out: Vec<F> = xhat
            .iter()
            .enumerate()
            .map(|(i, &v)| v * g[i % c] + b[i % c])
            .collect();
        let v = Tensor::new(&s, out)?;
        Ok(self.push(
            v,
            Op::Normalize {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[input, gamma, beta],
        ))
    }

    /// Accumulates `d loss / d leaf` into every gradient-requiring leaf.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::arg(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.requires_grad(loss) {
            return Err(Error::State("loss does not depend on any gradient-requiring input".into()));
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![F::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => {
                        for (a, &b) in acc.data_mut().iter_mut().zip(&g) {
                            *a += b;
                        }
                    }
                    None => node.grad = Some(Tensor::new(node.value.shape(), g)?),
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let nodes = &self.nodes;
        let wants = |id: NodeId| nodes[id.0].requires_grad;
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [F])| {
            if !nodes[id.0].requires_grad {
                return;
            }
            let slot = grads[id.0].get_or_insert_with(|| vec![F::zero(); nodes[id.0].value.len()]);
            f(slot);
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(x, &y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &mut |s| {
                    for ((x, &gy), &y) in s.iter_mut().zip(g).zip(vb) {
                        *x += gy * y;
                    }
                });
                acc(*b, &mut |s| {
                    for ((x, &gy), &y) in s.iter_mut().zip(g).zip(va) {
                        *x += gy * y;
                    }
                });
            }
            Op::Scale(a, k) => acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, &y)| *x += y * *k)),
            Op::ScaleBy(a, k) => {
                let kv = nodes[k.0].value.data()[0];
                let va = nodes[a.0].value.data();
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, &y)| *x += y * kv));
                acc(*k, &mut |s| s[0] += g.iter().zip(va).map(|(&y, &x)| y * x).sum::<F>());
            }
            Op::AddBias(a, bias) => {
                acc(*a, &mut |s| add_into(s, g));
                let o = nodes[bias.0].value.len();
                acc(*bias, &mut |s| {
                    for row in g.chunks_exact(o) {
                        add_into(s, row);
                    }
                });
            }
            &Op::MatMul { a, b, batch, m, k, n } => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(a, &mut |s| {
                    for bi in 0..batch {
                        gemm_nt(
                            m,
                            n,
                            k,
                            &g[bi * m * n..(bi + 1) * m * n],
                            &vb[bi * k * n..(bi + 1) * k * n],
                            &mut s[bi * m * k..(bi + 1) * m * k],
                        );
                    }
                });
                acc(b, &mut |s| {
                    for bi in 0..batch {
                        gemm_tn(
                            k,
                            m,
                            n,
                            &va[bi * m * k..(bi + 1) * m * k],
                            &g[bi * m * n..(bi + 1) * m * n],
                            &mut s[bi * k * n..(bi + 1) * k * n],
                        );
                    }
                });
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            } => {
                let rows = geom.rows();
                let patch = geom.patch();
                let og = geom.out_per_group();
                let hw = geom.out_h * geom.out_w;
                let o = geom.out_channels;
                // Gradient by output row, grouped: [groups][rows][og].
                let mut gmat = vec![F::zero(); geom.groups * rows * og];
                for row in 0..rows {
                    let (bi, pix) = (row / hw, row % hw);
                    for ch in 0..o {
                        let (grp, oc) = (ch / og, ch % og);
                        gmat[(grp * rows + row) * og + oc] = g[(bi * o + ch) * hw + pix];
                    }
                }
                if let Some(bias) = bias {
                    acc(*bias, &mut |s| {
                        for (idx, &v) in g.iter().enumerate() {
                            s[(idx / hw) % o] += v;
                        }
                    });
                }
                acc(*weight, &mut |s| {
                    for grp in 0..geom.groups {
                        gemm_tn(
                            og,
                            rows,
                            patch,
                            &gmat[grp * rows * og..(grp + 1) * rows * og],
                            &cols[grp * rows * patch..(grp + 1) * rows * patch],
                            &mut s[grp * og * patch..(grp + 1) * og * patch],
                        );
                    }
                });
                if wants(*input) {
                    let wv = nodes[weight.0].value.data();
                    let mut dcols = vec![F::zero(); geom.groups * rows * patch];
                    for grp in 0..geom.groups {
                        gemm_nn(
                            rows,
                            og,
                            patch,
                            &gmat[grp * rows * og..(grp + 1) * rows * og],
                            &wv[grp * og * patch..(grp + 1) * og * patch],
                            &mut dcols[grp * rows * patch..(grp + 1) * rows * patch],
                        );
                    }
                    acc(*input, &mut |s| col2im(geom, &dcols, s));
                }
            }
            Op::Reshape(a) => acc(*a, &mut |s| add_into(s, g)),
            Op::Gather { input, src } => acc(*input, &mut |s| {
                for (&gi, &si) in g.iter().zip(src) {
                    s[si] += gi;
                }
            }),
            Op::Reduce { input, dst, scale } => acc(*input, &mut |s| {
                for (x, &d) in s.iter_mut().zip(dst) {
                    *x += g[d] * *scale;
                }
            }),
            Op::Softmax(a) => {
                let y = nodes[i].value.data();
                let n = *nodes[i].value.shape().last().unwrap();
                acc(*a, &mut |s| {
                    for ((srow, grow), yrow) in s.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(y.chunks_exact(n)) {
                        let dot: F = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                        for ((x, &gy), &yy) in srow.iter_mut().zip(grow).zip(yrow) {
                            *x += yy * (gy - dot);
                        }
                    }
                });
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let c = nodes[logits.0].value.shape()[1];
                let scale = g[0] / F::from_usize(targets.len().max(1));
                acc(*logits, &mut |s| {
                    for (b, &t) in targets.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == t { F::one() } else { F::zero() };
                            s[b * c + j] += (probs[b * c + j] - onehot) * scale;
                        }
                    }
                });
            }
            Op::Lif {
                input,
                params,
                mode,
                t_steps,
                h,
            } => {
                let spikes = nodes[i].value.data();
                let gin = lif_scan_backward(g, h, spikes, *t_steps, params, *mode);
                acc(*input, &mut |s| add_into(s, &gin));
            }
            Op::Normalize {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = inv_std.len();
                let r = xhat.len() / c.max(1);
                let gv = nodes[gamma.0].value.data();
                acc(*beta, &mut |s| {
                    for row in g.chunks_exact(c) {
                        add_into(s, row);
                    }
                });
                acc(*gamma, &mut |s| {
                    for (grow, xrow) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        for j in 0..c {
                            s[j] += grow[j] * xrow[j];
                        }
                    }
                });
                if wants(*input) {
                    let rf = F::from_usize(r.max(1));
                    let mut sum_d = vec![F::zero(); c];
                    let mut sum_dx = vec![F::zero(); c];
                    for (grow, xrow) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        for j in 0..c {
                            let d = grow[j] * gv[j];
                            sum_d[j] += d;
                            sum_dx[j] += d * xrow[j];
                        }
                    }
                    acc(*input, &mut |s| {
                        for (idx, x) in s.iter_mut().enumerate() {
                            let j = idx % c;
                            let d = g[idx] * gv[j];
                            *x += inv_std[j] / rf * (rf * d - sum_d[j] - xhat[idx] * sum_dx[j]);
                        }
                    });
                }
            }
        }
    }
}

#[inline]
fn add_into<F: Real>(dst: &mut [F], src: &[F]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn conv_counting_window() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[1, 1, 6, 6], 1.0));
        let w = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let y = g.conv2d(x, w, None, Conv2dSpec::strided(3)).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 2, 2]);
        assert!(g.value(y).data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::<f64>::new();
        let i = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let a = g.constant(t(&[2, 2], &[3.0, -1.0, 0.5, 7.0]));
        let y = g.matmul(i, a).unwrap();
        assert_eq!(g.value(y), g.value(a));
    }

    #[test]
    fn softmax_uniform() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[3]));
        let y = g.softmax(x).unwrap();
        for &v in g.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_loss_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(Tensor::from_fn(&[2, 3, 2], |i| i as f64 - 4.0));
        let y = g.scale(x, 2.0);
        let loss = g.sum_all(y);
        g.backward(loss).unwrap();
        assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 2.0));
        // A second pass accumulates.
        g.backward(loss).unwrap();
        assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 4.0));
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn strided_readout_gradient_is_block_sum_of_counts() {
        // 2x2 response positions, K=3: d sum(out) / dW[n] = sum over blocks of count n.
        let counts: Vec<f64> = (0..36).map(|i| ((i * 5) % 7) as f64).collect();
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 1, 6, 6], &counts));
        let w = g.variable(Tensor::from_fn(&[1, 1, 3, 3], |i| i as f64 * 0.1));
        let y = g.conv2d(x, w, None, Conv2dSpec::strided(3)).unwrap();
        let loss = g.sum_all(y);
        g.backward(loss).unwrap();
        let grad = g.grad(w).unwrap().data();
        for a in 0..3 {
            for b in 0..3 {
                let mut expect = 0.0;
                for bi in 0..2 {
                    for bj in 0..2 {
                        expect += counts[(bi * 3 + a) * 6 + bj * 3 + b];
                    }
                }
                assert_eq!(grad[a * 3 + b], expect);
            }
        }
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 2]));
        let err = g.add(a, b).unwrap_err();
        assert_eq!(err.to_string(), "shape mismatch in add: [2, 3] vs [3, 2]");
        assert!(g.matmul(a, a).is_err());
        assert!(g.cross_entropy(a, &[0]).is_err());
        assert!(g.cross_entropy(a, &[0, 3]).is_err());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(Error::Argument(_))));
    }

    #[test]
    fn recording_off_keeps_values() {
        let build = |g: &mut Graph<f64>| {
            let x = g.variable(Tensor::from_fn(&[2, 4], |i| (i as f64).sin()));
            let w = g.variable(Tensor::from_fn(&[4, 3], |i| (i as f64).cos()));
            let y = g.matmul(x, w).unwrap();
            let s = g.softmax(y).unwrap();
            g.value(s).clone()
        };
        let mut on = Graph::new();
        let mut off = Graph::without_grad();
        assert_eq!(build(&mut on), build(&mut off));
    }

    #[test]
    fn transpose_and_reduce() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn(&[2, 3], |i| i as f64));
        let y = g.transpose_last(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        let s = g.sum(x, &[0]).unwrap();
        assert_eq!(g.value(s).data(), &[3.0, 5.0, 7.0]);
        let m = g.mean(x, &[1]).unwrap();
        assert_eq!(g.value(m).data(), &[1.0, 4.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[2, 4]));
        let l = g.cross_entropy(x, &[1, 3]).unwrap();
        assert!((g.value(l).data()[0] - 4f64.ln()).abs() < 1e-12);
    }
}
