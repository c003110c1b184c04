//! The Wengert tape: op recording, forward values, reverse-mode backward.

use std::collections::HashMap;

use super::ops;
use super::{shape_err, AutodiffError, ParamId, Parameter, Result, Tensor};

/// Index of a node on the tape. Valid only for the graph that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// How a parameter enters a graph.
///
/// `Trainable` registers it for gradient export; `Frozen` snapshots the
/// value as a constant so backward never produces a gradient for it. The
/// adversarial schedule relies on this: discriminators are frozen during
/// the generator phase and vice versa.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bind {
    Trainable,
    Frozen,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Affine { x: NodeId, mul: f32 },
    Sigmoid(NodeId),
    Silu(NodeId),
    Log(NodeId),
    Abs(NodeId),
    Clamp { x: NodeId, lo: f32, hi: f32 },
    Conv2d { x: NodeId, w: NodeId, b: Option<NodeId>, stride: (usize, usize), pad: (usize, usize) },
    Glu { x: NodeId, axis: usize },
    InstanceNorm { x: NodeId, gamma: NodeId, beta: NodeId },
    PixelShuffle { x: NodeId, r: usize },
    ZeroPad2d { x: NodeId, pad: [usize; 4] },
    Crop2d { x: NodeId, top: usize, left: usize },
    ConcatRows { a: NodeId, b: NodeId },
    Mean(NodeId),
    Sum(NodeId),
    Reshape(NodeId),
}

enum Aux {
    InstanceNorm { xhat: Vec<f32>, inv_std: Vec<f32> },
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
    aux: Option<Aux>,
}

/// A single-use computation tape.
///
/// Build one graph per optimization phase: register inputs and parameters,
/// compose ops, call [`Graph::backward`] on a scalar loss, then export
/// parameter gradients. Nodes are appended in topological order, so the
/// reverse sweep is a plain reverse iteration.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f32>>>,
    bindings: Vec<(ParamId, NodeId)>,
    trainable: HashMap<ParamId, NodeId>,
    frozen: HashMap<ParamId, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Value of a scalar node.
    pub fn scalar(&self, id: NodeId) -> Result<f32> {
        self.nodes[id.0].value.item()
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool, aux: Option<Aux>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value, needs_grad, aux });
        id
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, false, None)
    }

    /// A leaf with an explicit gradient flag; inputs under test use this.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(Op::Leaf, value, requires_grad, None)
    }

    /// Register a parameter, deduplicated by id within this graph.
    ///
    /// The value is snapshotted at first registration; later mutation of the
    /// parameter does not affect this graph.
    pub fn param(&mut self, p: &Parameter, bind: Bind) -> NodeId {
        match bind {
            Bind::Trainable => {
                if let Some(&id) = self.trainable.get(&p.id()) {
                    return id;
                }
                let id = self.push(Op::Leaf, p.value().clone(), true, None);
                self.trainable.insert(p.id(), id);
                self.bindings.push((p.id(), id));
                id
            }
            Bind::Frozen => {
                if let Some(&id) = self.frozen.get(&p.id()) {
                    return id;
                }
                let id = self.push(Op::Leaf, p.value().clone(), false, None);
                self.frozen.insert(p.id(), id);
                id
            }
        }
    }

    fn binary_same_shape(&mut self, op_name: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op_name, format!("operand shapes {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("add", a, b)?;
        let data: Vec<f32> =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, ng, None))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("sub", a, b)?;
        let data: Vec<f32> =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x - y).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Sub(a, b), value, ng, None))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("mul", a, b)?;
        let data: Vec<f32> =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), value, ng, None))
    }

    /// Elementwise `mul * x + add`.
    pub fn affine(&mut self, x: NodeId, mul: f32, add: f32) -> NodeId {
        let data: Vec<f32> = self.value(x).data().iter().map(|v| mul * v + add).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        let ng = self.needs(x);
        self.push(Op::Affine { x, mul }, value, ng, None)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f32> = self.value(x).data().iter().map(|&v| ops::sigmoid(v)).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        let ng = self.needs(x);
        self.push(Op::Sigmoid(x), value, ng, None)
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let data = ops::silu_fwd(self.value(x).data());
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        let ng = self.needs(x);
        self.push(Op::Silu(x), value, ng, None)
    }

    /// Natural log. Inputs must be positive; pair with [`Graph::clamp`].
    pub fn log(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f32> = self.value(x).data().iter().map(|v| v.ln()).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        let ng = self.needs(x);
        self.push(Op::Log(x), value, ng, None)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f32> = self.value(x).data().iter().map(|v| v.abs()).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        let ng = self.needs(x);
        self.push(Op::Abs(x), value, ng, None)
    }

    /// Clamp to `[lo, hi]`; the gradient passes only strictly inside.
    pub fn clamp(&mut self, x: NodeId, lo: f32, hi: f32) -> NodeId {
        let data: Vec<f32> = self.value(x).data().iter().map(|v| v.clamp(lo, hi)).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        let ng = self.needs(x);
        self.push(Op::Clamp { x, lo, hi }, value, ng, None)
    }

    /// Cross-correlation of `[cin,h,w]` with weights `[cout,cin,kh,kw]`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<NodeId> {
        if stride.0 == 0 || stride.1 == 0 {
            return Err(shape_err("conv2d", "stride must be positive"));
        }
        let (cin, h, iw) = self.value(x).dims3().map_err(|_| {
            shape_err("conv2d", format!("input must be [cin,h,w], got {:?}", self.value(x).shape()))
        })?;
        let wshape = self.value(w).shape().to_vec();
        let [cout, wcin, kh, kw] = wshape[..] else {
            return Err(shape_err(
                "conv2d",
                format!("weights must be [cout,cin,kh,kw], got {wshape:?}"),
            ));
        };
        if wcin != cin {
            return Err(shape_err(
                "conv2d",
                format!("input has {cin} channels but weights expect {wcin}"),
            ));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [cout] {
                return Err(shape_err(
                    "conv2d",
                    format!("bias shape {:?} vs {cout} output channels", self.value(b).shape()),
                ));
            }
        }
        let Some((oh, ow)) = ops::conv2d_out_dims(h, iw, kh, kw, stride, pad) else {
            return Err(shape_err(
                "conv2d",
                format!("kernel {kh}x{kw} exceeds padded input {h}x{iw} with pad {pad:?}"),
            ));
        };
        if oh == 0 || ow == 0 {
            return Err(shape_err("conv2d", format!("empty output {oh}x{ow}")));
        }
        let out = ops::conv2d_fwd(
            self.value(x).data(),
            (cin, h, iw),
            self.value(w).data(),
            (cout, kh, kw),
            b.map(|b| self.value(b).data()),
            stride,
            pad,
            (oh, ow),
        );
        let value = Tensor::new(vec![cout, oh, ow], out)?;
        let ng = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Op::Conv2d { x, w, b, stride, pad }, value, ng, None))
    }

    /// Gated linear unit along `axis`: split in half, `a * sigmoid(b)`.
    pub fn glu(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(shape_err("glu", format!("axis {axis} out of range for {shape:?}")));
        }
        if !shape[axis].is_multiple_of(2) {
            return Err(shape_err("glu", format!("axis {axis} has odd size {}", shape[axis])));
        }
        let (outer, n, inner) = ops::axis_split(&shape, axis);
        let out = ops::glu_fwd(self.value(x).data(), outer, n, inner);
        let mut oshape = shape;
        oshape[axis] = n / 2;
        let value = Tensor::new(oshape, out)?;
        let ng = self.needs(x);
        Ok(self.push(Op::Glu { x, axis }, value, ng, None))
    }

    /// Per-channel (axis 0) standardization followed by `gamma * xhat + beta`.
    pub fn instance_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f32,
    ) -> Result<NodeId> {
        let shape = self.value(x).shape().to_vec();
        if shape.len() < 2 {
            return Err(shape_err("instance_norm", format!("need rank >= 2, got {shape:?}")));
        }
        let channels = shape[0];
        let m = self.value(x).numel() / channels;
        if m < 2 {
            return Err(shape_err("instance_norm", "spatial size per channel must be >= 2"));
        }
        if eps <= 0.0 || eps.is_nan() {
            return Err(shape_err("instance_norm", "eps must be positive"));
        }
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            if self.value(id).shape() != [channels] {
                return Err(shape_err(
                    "instance_norm",
                    format!("{name} shape {:?} vs {channels} channels", self.value(id).shape()),
                ));
            }
        }
        let (out, xhat, inv_std) = ops::instance_norm_fwd(
            self.value(x).data(),
            channels,
            m,
            self.value(gamma).data(),
            self.value(beta).data(),
            eps,
        );
        let value = Tensor::new(shape, out)?;
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            Op::InstanceNorm { x, gamma, beta },
            value,
            ng,
            Some(Aux::InstanceNorm { xhat, inv_std }),
        ))
    }

    /// Depth-to-space: `[c*r^2, h, w]` becomes `[c, r*h, r*w]` with
    /// `out(c, r*h+i, r*w+j) = in(c*r^2 + i*r + j, h, w)`.
    pub fn pixel_shuffle(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        if r == 0 {
            return Err(shape_err("pixel_shuffle", "upscale factor must be positive"));
        }
        let (c, h, w) = self.value(x).dims3().map_err(|_| {
            shape_err("pixel_shuffle", format!("need [c,h,w], got {:?}", self.value(x).shape()))
        })?;
        if c % (r * r) != 0 {
            return Err(shape_err(
                "pixel_shuffle",
                format!("{c} channels not divisible by r^2 = {}", r * r),
            ));
        }
        let c_out = c / (r * r);
        let out = ops::pixel_shuffle_fwd(self.value(x).data(), c_out, h, w, r);
        let value = Tensor::new(vec![c_out, h * r, w * r], out)?;
        let ng = self.needs(x);
        Ok(self.push(Op::PixelShuffle { x, r }, value, ng, None))
    }

    /// Zero-pad `[c,h,w]` by `[top, bottom, left, right]`.
    pub fn zero_pad2d(&mut self, x: NodeId, pad: [usize; 4]) -> Result<NodeId> {
        let (c, h, w) = self.value(x).dims3().map_err(|_| {
            shape_err("zero_pad2d", format!("need [c,h,w], got {:?}", self.value(x).shape()))
        })?;
        let out = ops::zero_pad2d_fwd(self.value(x).data(), (c, h, w), pad);
        let value = Tensor::new(vec![c, h + pad[0] + pad[1], w + pad[2] + pad[3]], out)?;
        let ng = self.needs(x);
        Ok(self.push(Op::ZeroPad2d { x, pad }, value, ng, None))
    }

    /// Crop `[c,h,w]` to `out_h x out_w` from `(top, left)`.
    pub fn crop2d(
        &mut self,
        x: NodeId,
        top: usize,
        left: usize,
        out_h: usize,
        out_w: usize,
    ) -> Result<NodeId> {
        let (c, h, w) = self.value(x).dims3().map_err(|_| {
            shape_err("crop2d", format!("need [c,h,w], got {:?}", self.value(x).shape()))
        })?;
        if out_h == 0 || out_w == 0 || top + out_h > h || left + out_w > w {
            return Err(shape_err(
                "crop2d",
                format!("crop {out_h}x{out_w} at ({top},{left}) from {h}x{w}"),
            ));
        }
        let out = ops::crop2d_fwd(self.value(x).data(), (c, h, w), top, left, out_h, out_w);
        let value = Tensor::new(vec![c, out_h, out_w], out)?;
        let ng = self.needs(x);
        Ok(self.push(Op::Crop2d { x, top, left }, value, ng, None))
    }

    /// Stack `[c,h1,w]` on top of `[c,h2,w]` along the row axis.
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ca, ha, wa) = self.value(a).dims3().map_err(|_| {
            shape_err("concat_rows", format!("need [c,h,w], got {:?}", self.value(a).shape()))
        })?;
        let (cb, hb, wb) = self.value(b).dims3().map_err(|_| {
            shape_err("concat_rows", format!("need [c,h,w], got {:?}", self.value(b).shape()))
        })?;
        if ca != cb || wa != wb {
            return Err(shape_err("concat_rows", format!("[{ca},{ha},{wa}] vs [{cb},{hb},{wb}]")));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0f32; da.len() + db.len()];
        let (oh, plane_a, plane_b) = (ha + hb, ha * wa, hb * wb);
        for c in 0..ca {
            out[c * oh * wa..c * oh * wa + plane_a]
                .copy_from_slice(&da[c * plane_a..(c + 1) * plane_a]);
            out[c * oh * wa + plane_a..(c + 1) * oh * wa]
                .copy_from_slice(&db[c * plane_b..(c + 1) * plane_b]);
        }
        let value = Tensor::new(vec![ca, oh, wa], out)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::ConcatRows { a, b }, value, ng, None))
    }

    /// Scalar mean over all elements.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).numel();
        let value = Tensor::scalar((ops::sum_f64(self.value(x).data()) / n as f64) as f32);
        let ng = self.needs(x);
        self.push(Op::Mean(x), value, ng, None)
    }

    /// Scalar sum over all elements.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(ops::sum_f64(self.value(x).data()) as f32);
        let ng = self.needs(x);
        self.push(Op::Sum(x), value, ng, None)
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(x).clone().reshape(shape)?;
        let ng = self.needs(x);
        Ok(self.push(Op::Reshape(x), value, ng, None))
    }

    /// Mean absolute difference between two same-shape nodes.
    pub fn l1_distance(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let d = self.sub(a, b)?;
        let d = self.abs(d);
        Ok(self.mean(d))
    }

    /// Reverse sweep from a scalar loss; gradients land on leaves.
    ///
    /// Intermediate gradients are dropped as soon as they are consumed;
    /// leaf gradients stay queryable until the next backward call.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss {
                shape: self.nodes[loss.0].value.shape().to_vec(),
            });
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].needs_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.apply_vjp(i, &g);
        }
        Ok(())
    }

    fn apply_vjp(&mut self, i: usize, g: &[f32]) {
        // Split borrows: VJPs read node values and write gradient slots.
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let acc = |grads: &mut Vec<Option<Vec<f32>>>, id: NodeId, f: &mut dyn FnMut(&mut [f32])| {
            if !nodes[id.0].needs_grad {
                return;
            }
            let buf = grads[id.0].get_or_insert_with(|| vec![0.0; nodes[id.0].value.numel()]);
            f(buf);
        };
        let val = |id: NodeId| nodes[id.0].value.data();

        match nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(grads, a, &mut |d| {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                });
                acc(grads, b, &mut |d| {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                });
            }
            Op::Sub(a, b) => {
                acc(grads, a, &mut |d| {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                });
                acc(grads, b, &mut |d| {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv -= gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                acc(grads, a, &mut |d| {
                    for ((dv, gv), bv) in d.iter_mut().zip(g).zip(val(b)) {
                        *dv += gv * bv;
                    }
                });
                acc(grads, b, &mut |d| {
                    for ((dv, gv), av) in d.iter_mut().zip(g).zip(val(a)) {
                        *dv += gv * av;
                    }
                });
            }
            Op::Affine { x, mul } => {
                acc(grads, x, &mut |d| {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += mul * gv;
                    }
                });
            }
            Op::Sigmoid(x) => {
                let s = nodes[i].value.data();
                acc(grads, x, &mut |d| {
                    for ((dv, gv), sv) in d.iter_mut().zip(g).zip(s) {
                        *dv += gv * sv * (1.0 - sv);
                    }
                });
            }
            Op::Silu(x) => {
                acc(grads, x, &mut |d| ops::silu_bwd(g, val(x), d));
            }
            Op::Log(x) => {
                acc(grads, x, &mut |d| {
                    for ((dv, gv), xv) in d.iter_mut().zip(g).zip(val(x)) {
                        *dv += gv / xv;
                    }
                });
            }
            Op::Abs(x) => {
                acc(grads, x, &mut |d| {
                    for ((dv, gv), xv) in d.iter_mut().zip(g).zip(val(x)) {
                        *dv += gv
                            * if *xv > 0.0 {
                                1.0
                            } else if *xv < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                acc(grads, x, &mut |d| {
                    for ((dv, gv), xv) in d.iter_mut().zip(g).zip(val(x)) {
                        if *xv > lo && *xv < hi {
                            *dv += gv;
                        }
                    }
                });
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let (cin, h, iw) = nodes[x.0].value.dims3().expect("validated");
                let wshape = nodes[w.0].value.shape();
                let (cout, kh, kw) = (wshape[0], wshape[2], wshape[3]);
                let oshape = nodes[i].value.shape();
                let (oh, ow) = (oshape[1], oshape[2]);
                let (dx, dw, db) = ops::conv2d_bwd(
                    g,
                    val(x),
                    (cin, h, iw),
                    val(w),
                    (cout, kh, kw),
                    stride,
                    pad,
                    (oh, ow),
                    nodes[x.0].needs_grad,
                    nodes[w.0].needs_grad,
                    b.is_some_and(|b| nodes[b.0].needs_grad),
                );
                if let Some(dx) = dx {
                    acc(grads, x, &mut |d| {
                        for (dv, sv) in d.iter_mut().zip(&dx) {
                            *dv += sv;
                        }
                    });
                }
                if let Some(dw) = dw {
                    acc(grads, w, &mut |d| {
                        for (dv, sv) in d.iter_mut().zip(&dw) {
                            *dv += sv;
                        }
                    });
                }
                if let (Some(db), Some(b)) = (db, b) {
                    acc(grads, b, &mut |d| {
                        for (dv, sv) in d.iter_mut().zip(&db) {
                            *dv += sv;
                        }
                    });
                }
            }
            Op::Glu { x, axis } => {
                let (outer, n, inner) = ops::axis_split(nodes[x.0].value.shape(), axis);
                let dx = ops::glu_bwd(g, val(x), outer, n, inner);
                acc(grads, x, &mut |d| {
                    for (dv, sv) in d.iter_mut().zip(&dx) {
                        *dv += sv;
                    }
                });
            }
            Op::InstanceNorm { x, gamma, beta } => {
                let Some(Aux::InstanceNorm { ref xhat, ref inv_std }) = nodes[i].aux else {
                    unreachable!("instance_norm node keeps its aux buffers");
                };
                let channels = nodes[x.0].value.shape()[0];
                let m = nodes[x.0].value.numel() / channels;
                let (dx, dgamma, dbeta) = ops::instance_norm_bwd(
                    g,
                    xhat,
                    inv_std,
                    channels,
                    m,
                    val(gamma),
                    nodes[x.0].needs_grad,
                    nodes[gamma.0].needs_grad,
                    nodes[beta.0].needs_grad,
                );
                if let Some(dx) = dx {
                    acc(grads, x, &mut |d| {
                        for (dv, sv) in d.iter_mut().zip(&dx) {
                            *dv += sv;
                        }
                    });
                }
                if let Some(dg) = dgamma {
                    acc(grads, gamma, &mut |d| {
                        for (dv, sv) in d.iter_mut().zip(&dg) {
                            *dv += sv;
                        }
                    });
                }
                if let Some(db) = dbeta {
                    acc(grads, beta, &mut |d| {
                        for (dv, sv) in d.iter_mut().zip(&db) {
                            *dv += sv;
                        }
                    });
                }
            }
            Op::PixelShuffle { x, r } => {
                let (c, h, w) = nodes[x.0].value.dims3().expect("validated");
                let dx = ops::pixel_shuffle_bwd(g, c / (r * r), h, w, r);
                acc(grads, x, &mut |d| {
                    for (dv, sv) in d.iter_mut().zip(&dx) {
                        *dv += sv;
                    }
                });
            }
            Op::ZeroPad2d { x, pad } => {
                let (c, h, w) = nodes[x.0].value.dims3().expect("validated");
                let oshape = nodes[i].value.shape();
                let (oh, ow) = (oshape[1], oshape[2]);
                acc(grads, x, &mut |d| {
                    for ci in 0..c {
                        for y in 0..h {
                            let src = &g[(ci * oh + y + pad[0]) * ow + pad[2]..][..w];
                            let dst = &mut d[(ci * h + y) * w..][..w];
                            for (dv, sv) in dst.iter_mut().zip(src) {
                                *dv += sv;
                            }
                        }
                    }
                });
            }
            Op::Crop2d { x, top, left } => {
                let (c, h, w) = nodes[x.0].value.dims3().expect("validated");
                let oshape = nodes[i].value.shape();
                let (oh, ow) = (oshape[1], oshape[2]);
                acc(grads, x, &mut |d| {
                    for ci in 0..c {
                        for y in 0..oh {
                            let src = &g[(ci * oh + y) * ow..][..ow];
                            let dst = &mut d[(ci * h + y + top) * w + left..][..ow];
                            for (dv, sv) in dst.iter_mut().zip(src) {
                                *dv += sv;
                            }
                        }
                    }
                });
            }
            Op::ConcatRows { a, b } => {
                let (c, ha, w) = nodes[a.0].value.dims3().expect("validated");
                let hb = nodes[b.0].value.shape()[1];
                let oh = ha + hb;
                acc(grads, a, &mut |d| {
                    for ci in 0..c {
                        let src = &g[ci * oh * w..][..ha * w];
                        let dst = &mut d[ci * ha * w..][..ha * w];
                        for (dv, sv) in dst.iter_mut().zip(src) {
                            *dv += sv;
                        }
                    }
                });
                acc(grads, b, &mut |d| {
                    for ci in 0..c {
                        let src = &g[ci * oh * w + ha * w..][..hb * w];
                        let dst = &mut d[ci * hb * w..][..hb * w];
                        for (dv, sv) in dst.iter_mut().zip(src) {
                            *dv += sv;
                        }
                    }
                });
            }
            Op::Mean(x) => {
                let n = nodes[x.0].value.numel() as f32;
                let gv = g[0] / n;
                acc(grads, x, &mut |d| {
                    for dv in d.iter_mut() {
                        *dv += gv;
                    }
                });
            }
            Op::Sum(x) => {
                let gv = g[0];
                acc(grads, x, &mut |d| {
                    for dv in d.iter_mut() {
                        *dv += gv;
                    }
                });
            }
            Op::Reshape(x) => {
                acc(grads, x, &mut |d| {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                });
            }
        }
    }

    /// Gradient buffer of a node after [`Graph::backward`].
    ///
    /// Only leaves retain gradients; interior buffers are consumed during
    /// the sweep.
    pub fn grad(&self, id: NodeId) -> Option<&[f32]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient tensor for a trainable parameter registered in this graph.
    ///
    /// Returns zeros when the parameter is registered but off the loss
    /// path; `None` when it was never registered as trainable here.
    pub fn export_grad(&self, pid: ParamId) -> Option<Tensor> {
        let &node = self.trainable.get(&pid)?;
        let shape = self.nodes[node.0].value.shape().to_vec();
        let data = match self.grads.get(node.0).and_then(|g| g.clone()) {
            Some(g) => g,
            None => vec![0.0; self.nodes[node.0].value.numel()],
        };
        Some(Tensor::new(shape, data).expect("gradient matches value shape"))
    }

    /// Trainable parameter ids in registration order.
    pub fn trainable_params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.bindings.iter().map(|&(pid, _)| pid)
    }
}
