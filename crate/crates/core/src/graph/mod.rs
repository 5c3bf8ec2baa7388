//! Reverse-mode automatic differentiation on dynamically shaped `f64` arrays.
//!
//! The graph is built eagerly: every operation computes its value when the
//! node is created. `backward` walks the tape in reverse creation order and
//! *emits the vector-Jacobian products as new graph nodes*, so a gradient is
//! itself a differentiable expression. Calling `backward` on a scalar built
//! from gradient nodes differentiates through the first backward pass; this
//! is what the gradient-penalty term needs.
//!
//! Piecewise-linear activations (`leaky_relu`, `relu`) and max-pooling
//! contribute their branch selections as constants to the backward graph.
//! Re-differentiating through them treats the selection as locally fixed,
//! which is exact everywhere except on the measure-zero kink set.

mod kernels;

use ndarray::{ArrayD, Axis, IxDyn};
use std::sync::Arc;

/// Handle to a node in a [`Graph`].
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub struct NodeId(u32);

impl NodeId {
    fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone)]
enum Op {
    Leaf { trainable: bool },
    Add,
    Sub,
    Mul,
    Neg,
    Scale(f64),
    AddScalar,
    Recip,
    SqrtEps,
    Expm1,
    LeakyRelu { slope: f64 },
    MatMul { ta: bool, tb: bool },
    Conv2d { stride: (usize, usize) },
    ConvT2d { stride: (usize, usize) },
    ConvWGrad { stride: (usize, usize) },
    AddChanBias,
    SumChan,
    BroadcastChan,
    AddRowBias,
    SumRows,
    BroadcastRows,
    Pad2d { off: (usize, usize) },
    Crop2d { off: (usize, usize) },
    ConcatCh,
    SliceCh { start: usize },
    PadCh { start: usize },
    MaxPool2 { idx: Arc<Vec<u32>>, in_hw: (usize, usize) },
    MaxUnpool2 { idx: Arc<Vec<u32>>, pooled_hw: (usize, usize) },
    PoolGather { idx: Arc<Vec<u32>> },
    Reshape,
    Sum,
    BroadcastTo,
    SumPerSample,
    BroadcastPerSample,
    MulPerSample,
}

struct Node {
    value: ArrayD<f64>,
    parents: Vec<NodeId>,
    op: Op,
    needs_grad: bool,
}

/// Eagerly evaluated computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a node.
    pub fn value(&self, id: NodeId) -> &ArrayD<f64> {
        &self.nodes[id.index()].value
    }

    /// Value of a single-element node as `f64`.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "scalar() on node of shape {:?}", v.shape());
        *v.iter().next().unwrap()
    }

    fn push(&mut self, op: Op, parents: Vec<NodeId>, value: ArrayD<f64>) -> NodeId {
        let needs_grad = match op {
            Op::Leaf { trainable } => trainable,
            _ => parents.iter().any(|p| self.nodes[p.index()].needs_grad),
        };
        let id = NodeId(u32::try_from(self.nodes.len()).expect("graph too large"));
        self.nodes.push(Node {
            value,
            parents,
            op,
            needs_grad,
        });
        id
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: ArrayD<f64>) -> NodeId {
        self.push(Op::Leaf { trainable: false }, vec![], value)
    }

    /// Leaf that participates in differentiation.
    pub fn var(&mut self, value: ArrayD<f64>) -> NodeId {
        self.push(Op::Leaf { trainable: true }, vec![], value)
    }

    fn scalar_const(&mut self, v: f64) -> NodeId {
        self.constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = {
            let (x, y) = (self.value(a), self.value(b));
            assert_eq!(x.shape(), y.shape(), "add: shape mismatch");
            x + y
        };
        self.push(Op::Add, vec![a, b], v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = {
            let (x, y) = (self.value(a), self.value(b));
            assert_eq!(x.shape(), y.shape(), "sub: shape mismatch");
            x - y
        };
        self.push(Op::Sub, vec![a, b], v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = {
            let (x, y) = (self.value(a), self.value(b));
            assert_eq!(x.shape(), y.shape(), "mul: shape mismatch");
            x * y
        };
        self.push(Op::Mul, vec![a, b], v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| -x);
        self.push(Op::Neg, vec![a], v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).mapv(|x| c * x);
        self.push(Op::Scale(c), vec![a], v)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x + c);
        self.push(Op::AddScalar, vec![a], v)
    }

    /// Elementwise reciprocal.
    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| 1.0 / x);
        self.push(Op::Recip, vec![a], v)
    }

    /// Elementwise `sqrt(x + eps)`; `eps > 0` keeps the derivative finite at zero.
    pub fn sqrt_eps(&mut self, a: NodeId, eps: f64) -> NodeId {
        let v = self.value(a).mapv(|x| (x + eps).sqrt());
        self.push(Op::SqrtEps, vec![a], v)
    }

    /// Elementwise `exp(x) - 1`, the inverse of `ln(1 + x)`.
    pub fn expm1(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::exp_m1);
        self.push(Op::Expm1, vec![a], v)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let v = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push(Op::LeakyRelu { slope }, vec![a], v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.leaky_relu(a, 0.0)
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> NodeId {
        let v = kernels::matmul(self.value(a), self.value(b), ta, tb);
        self.push(Op::MatMul { ta, tb }, vec![a, b], v)
    }

    // ---- convolution ----

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: (usize, usize)) -> NodeId {
        let v = kernels::conv2d(self.value(x), self.value(w), stride);
        self.push(Op::Conv2d { stride }, vec![x, w], v)
    }

    pub fn conv_t2d(
        &mut self,
        z: NodeId,
        w: NodeId,
        stride: (usize, usize),
        out_hw: (usize, usize),
    ) -> NodeId {
        let v = kernels::conv_t2d(self.value(z), self.value(w), stride, out_hw);
        self.push(Op::ConvT2d { stride }, vec![z, w], v)
    }

    pub fn conv_wgrad(
        &mut self,
        x: NodeId,
        g: NodeId,
        stride: (usize, usize),
        kernel: (usize, usize),
    ) -> NodeId {
        let v = kernels::conv_wgrad(self.value(x), self.value(g), stride, kernel);
        self.push(Op::ConvWGrad { stride }, vec![x, g], v)
    }

    // ---- bias and reductions over fixed axes ----

    /// `[b,c,h,w] + bias[c]`.
    pub fn add_chan_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let v = {
            let xv = self.value(x);
            let bv = self.value(bias);
            assert_eq!(bv.ndim(), 1, "add_chan_bias: bias must be 1-d");
            assert_eq!(xv.shape()[1], bv.len(), "add_chan_bias: channel mismatch");
            let mut out = xv.clone();
            for (c, &bc) in bv.iter().enumerate() {
                out.slice_mut(ndarray::s![.., c, .., ..]).mapv_inplace(|x| x + bc);
            }
            out
        };
        self.push(Op::AddChanBias, vec![x, bias], v)
    }

    /// Sums `[b,c,h,w]` over batch and space, leaving `[c]`.
    pub fn sum_chan(&mut self, x: NodeId) -> NodeId {
        let v = self
            .value(x)
            .sum_axis(Axis(3))
            .sum_axis(Axis(2))
            .sum_axis(Axis(0));
        self.push(Op::SumChan, vec![x], v.into_dyn())
    }

    fn broadcast_chan(&mut self, bias: NodeId, shape: Vec<usize>) -> NodeId {
        let v = {
            let bv = self.value(bias);
            let mut out = ArrayD::zeros(IxDyn(&shape));
            for (c, &bc) in bv.iter().enumerate() {
                out.slice_mut(ndarray::s![.., c, .., ..]).fill(bc);
            }
            out
        };
        self.push(Op::BroadcastChan, vec![bias], v)
    }

    /// `[b,m] + bias[m]`.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let v = {
            let xv = self.value(x);
            let bv = self.value(bias);
            assert_eq!(xv.shape()[1], bv.len(), "add_row_bias: width mismatch");
            let mut out = xv.clone();
            for mut row in out.axis_iter_mut(Axis(0)) {
                row += &bv.view();
            }
            out
        };
        self.push(Op::AddRowBias, vec![x, bias], v)
    }

    /// Sums `[b,m]` over the batch axis, leaving `[m]`.
    pub fn sum_rows(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).sum_axis(Axis(0));
        self.push(Op::SumRows, vec![x], v.into_dyn())
    }

    fn broadcast_rows(&mut self, bias: NodeId, rows: usize) -> NodeId {
        let v = {
            let bv = self.value(bias);
            let m = bv.len();
            let mut out = ArrayD::zeros(IxDyn(&[rows, m]));
            for mut row in out.axis_iter_mut(Axis(0)) {
                row.assign(&bv.view());
            }
            out
        };
        self.push(Op::BroadcastRows, vec![bias], v)
    }

    // ---- shape surgery ----

    pub fn pad2d(&mut self, x: NodeId, off: (usize, usize), out_hw: (usize, usize)) -> NodeId {
        let v = kernels::pad2d(self.value(x), off, out_hw);
        self.push(Op::Pad2d { off }, vec![x], v)
    }

    pub fn crop2d(&mut self, x: NodeId, off: (usize, usize), size: (usize, usize)) -> NodeId {
        let v = kernels::crop2d(self.value(x), off, size);
        self.push(Op::Crop2d { off }, vec![x], v)
    }

    pub fn concat_ch(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = kernels::concat_ch(self.value(a), self.value(b));
        self.push(Op::ConcatCh, vec![a, b], v)
    }

    pub fn slice_ch(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = kernels::slice_ch(self.value(x), start, len);
        self.push(Op::SliceCh { start }, vec![x], v)
    }

    fn pad_ch(&mut self, x: NodeId, start: usize, total: usize) -> NodeId {
        let v = kernels::pad_ch(self.value(x), start, total);
        self.push(Op::PadCh { start }, vec![x], v)
    }

    pub fn max_pool2(&mut self, x: NodeId) -> NodeId {
        let in_hw = {
            let s = self.value(x).shape();
            (s[2], s[3])
        };
        let (v, idx) = kernels::max_pool2(self.value(x));
        self.push(
            Op::MaxPool2 {
                idx: Arc::new(idx),
                in_hw,
            },
            vec![x],
            v,
        )
    }

    fn max_unpool2(&mut self, g: NodeId, idx: Arc<Vec<u32>>, in_hw: (usize, usize)) -> NodeId {
        let pooled_hw = {
            let s = self.value(g).shape();
            (s[2], s[3])
        };
        let v = kernels::max_unpool2(self.value(g), &idx, in_hw);
        self.push(Op::MaxUnpool2 { idx, pooled_hw }, vec![g], v)
    }

    fn pool_gather(&mut self, u: NodeId, idx: Arc<Vec<u32>>, out_hw: (usize, usize)) -> NodeId {
        let v = kernels::pool_gather(self.value(u), &idx, out_hw);
        self.push(Op::PoolGather { idx }, vec![u], v)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        let v = {
            let xv = self.value(x);
            assert_eq!(
                xv.len(),
                shape.iter().product::<usize>(),
                "reshape: element count mismatch"
            );
            xv.as_standard_layout()
                .into_owned()
                .into_shape_with_order(IxDyn(shape))
                .expect("reshape")
        };
        self.push(Op::Reshape, vec![x], v)
    }

    // ---- reductions ----

    /// Sum of all elements, as a 0-d node.
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let v = ArrayD::from_elem(IxDyn(&[]), self.value(x).sum());
        self.push(Op::Sum, vec![x], v)
    }

    /// Mean of all elements, as a 0-d node.
    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    fn broadcast_to(&mut self, s: NodeId, shape: Vec<usize>) -> NodeId {
        let v = ArrayD::from_elem(IxDyn(&shape), self.scalar(s));
        self.push(Op::BroadcastTo, vec![s], v)
    }

    /// Sums every axis except the first: `[b, ...] -> [b]`.
    pub fn sum_per_sample(&mut self, x: NodeId) -> NodeId {
        let v = {
            let xv = self.value(x);
            let sums: Vec<f64> = xv.axis_iter(Axis(0)).map(|sample| sample.sum()).collect();
            ArrayD::from_shape_vec(IxDyn(&[sums.len()]), sums).unwrap()
        };
        self.push(Op::SumPerSample, vec![x], v)
    }

    fn broadcast_per_sample(&mut self, s: NodeId, shape: Vec<usize>) -> NodeId {
        let v = {
            let sv = self.value(s);
            let mut out = ArrayD::zeros(IxDyn(&shape));
            for (i, mut sample) in out.axis_iter_mut(Axis(0)).enumerate() {
                sample.fill(sv[[i]]);
            }
            out
        };
        self.push(Op::BroadcastPerSample, vec![s], v)
    }

    /// Scales each sample of `x [b, ...]` by the matching entry of `s [b]`.
    pub fn mul_per_sample(&mut self, x: NodeId, s: NodeId) -> NodeId {
        let v = {
            let xv = self.value(x);
            let sv = self.value(s);
            assert_eq!(xv.shape()[0], sv.len(), "mul_per_sample: batch mismatch");
            let mut out = xv.clone();
            for (i, mut sample) in out.axis_iter_mut(Axis(0)).enumerate() {
                let c = sv[[i]];
                sample.mapv_inplace(|x| c * x);
            }
            out
        };
        self.push(Op::MulPerSample, vec![x, s], v)
    }

    /// Zero-valued node shaped like `x`.
    pub fn zeros_like(&mut self, x: NodeId) -> NodeId {
        let v = ArrayD::zeros(self.value(x).raw_dim());
        self.constant(v)
    }

    // ---- differentiation ----

    /// Reverse-mode gradients of the scalar `root` with respect to `wrt`.
    ///
    /// Returns one node per entry of `wrt`; nodes that `root` does not depend
    /// on get a zero gradient. The returned nodes live on the same tape and
    /// may be differentiated again.
    pub fn backward(&mut self, root: NodeId, wrt: &[NodeId]) -> Vec<NodeId> {
        assert_eq!(
            self.value(root).len(),
            1,
            "backward: root must be scalar, got shape {:?}",
            self.value(root).shape()
        );
        let n = root.index() + 1;
        let mut cot: Vec<Option<NodeId>> = vec![None; n];
        let one = self.scalar_const(1.0);
        cot[root.index()] = Some(one);

        for id in (0..n).rev() {
            let Some(g) = cot[id] else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            let op = self.nodes[id].op.clone();
            let parents = self.nodes[id].parents.clone();
            match op {
                Op::Leaf { .. } => {}
                Op::Add => {
                    self.accumulate(&mut cot, parents[0], g);
                    self.accumulate(&mut cot, parents[1], g);
                }
                Op::Sub => {
                    self.accumulate(&mut cot, parents[0], g);
                    let ng = self.neg(g);
                    self.accumulate(&mut cot, parents[1], ng);
                }
                Op::Mul => {
                    let (a, b) = (parents[0], parents[1]);
                    let da = self.mul(g, b);
                    self.accumulate(&mut cot, a, da);
                    let db = self.mul(g, a);
                    self.accumulate(&mut cot, b, db);
                }
                Op::Neg => {
                    let d = self.neg(g);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::Scale(c) => {
                    let d = self.scale(g, c);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::AddScalar => {
                    self.accumulate(&mut cot, parents[0], g);
                }
                Op::Recip => {
                    // d(1/x) = -y^2 dx with y the op's own output.
                    let y = NodeId(id as u32);
                    let gy = self.mul(g, y);
                    let gyy = self.mul(gy, y);
                    let d = self.neg(gyy);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::SqrtEps => {
                    let y = NodeId(id as u32);
                    let ry = self.recip(y);
                    let gry = self.mul(g, ry);
                    let d = self.scale(gry, 0.5);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::Expm1 => {
                    // d(e^x - 1) = e^x dx = (y + 1) dx with y the output.
                    let y = NodeId(id as u32);
                    let ex = self.add_scalar(y, 1.0);
                    let d = self.mul(g, ex);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::LeakyRelu { slope } => {
                    let mask = self
                        .value(parents[0])
                        .mapv(|x| if x > 0.0 { 1.0 } else { slope });
                    let m = self.constant(mask);
                    let d = self.mul(g, m);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::MatMul { ta, tb } => {
                    let (a, b) = (parents[0], parents[1]);
                    let (da, db) = match (ta, tb) {
                        (false, false) => {
                            (self.matmul(g, b, false, true), self.matmul(a, g, true, false))
                        }
                        (false, true) => {
                            (self.matmul(g, b, false, false), self.matmul(g, a, true, false))
                        }
                        (true, false) => {
                            (self.matmul(b, g, false, true), self.matmul(a, g, false, false))
                        }
                        (true, true) => {
                            (self.matmul(b, g, true, true), self.matmul(g, a, true, true))
                        }
                    };
                    self.accumulate(&mut cot, a, da);
                    self.accumulate(&mut cot, b, db);
                }
                Op::Conv2d { stride } => {
                    let (x, w) = (parents[0], parents[1]);
                    let in_hw = {
                        let s = self.value(x).shape();
                        (s[2], s[3])
                    };
                    let kernel = {
                        let s = self.value(w).shape();
                        (s[2], s[3])
                    };
                    let dx = self.conv_t2d(g, w, stride, in_hw);
                    self.accumulate(&mut cot, x, dx);
                    let dw = self.conv_wgrad(x, g, stride, kernel);
                    self.accumulate(&mut cot, w, dw);
                }
                Op::ConvT2d { stride } => {
                    let (z, w) = (parents[0], parents[1]);
                    let kernel = {
                        let s = self.value(w).shape();
                        (s[2], s[3])
                    };
                    let dz = self.conv2d(g, w, stride);
                    debug_assert_eq!(self.value(dz).shape(), self.value(z).shape());
                    self.accumulate(&mut cot, z, dz);
                    let dw = self.conv_wgrad(g, z, stride, kernel);
                    self.accumulate(&mut cot, w, dw);
                }
                Op::ConvWGrad { stride } => {
                    // Bilinear in (x, g_in); the cotangent is kernel-shaped.
                    let (x, gin) = (parents[0], parents[1]);
                    let in_hw = {
                        let s = self.value(x).shape();
                        (s[2], s[3])
                    };
                    let dx = self.conv_t2d(gin, g, stride, in_hw);
                    self.accumulate(&mut cot, x, dx);
                    let dgin = self.conv2d(x, g, stride);
                    debug_assert_eq!(self.value(dgin).shape(), self.value(gin).shape());
                    self.accumulate(&mut cot, gin, dgin);
                }
                Op::AddChanBias => {
                    self.accumulate(&mut cot, parents[0], g);
                    let db = self.sum_chan(g);
                    self.accumulate(&mut cot, parents[1], db);
                }
                Op::SumChan => {
                    let shape = self.value(parents[0]).shape().to_vec();
                    let d = self.broadcast_chan(g, shape);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::BroadcastChan => {
                    let d = self.sum_chan(g);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::AddRowBias => {
                    self.accumulate(&mut cot, parents[0], g);
                    let db = self.sum_rows(g);
                    self.accumulate(&mut cot, parents[1], db);
                }
                Op::SumRows => {
                    let rows = self.value(parents[0]).shape()[0];
                    let d = self.broadcast_rows(g, rows);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::BroadcastRows => {
                    let d = self.sum_rows(g);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::Pad2d { off } => {
                    let size = {
                        let s = self.value(parents[0]).shape();
                        (s[2], s[3])
                    };
                    let d = self.crop2d(g, off, size);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::Crop2d { off } => {
                    let out_hw = {
                        let s = self.value(parents[0]).shape();
                        (s[2], s[3])
                    };
                    let d = self.pad2d(g, off, out_hw);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::ConcatCh => {
                    let ca = self.value(parents[0]).shape()[1];
                    let cb = self.value(parents[1]).shape()[1];
                    let da = self.slice_ch(g, 0, ca);
                    self.accumulate(&mut cot, parents[0], da);
                    let db = self.slice_ch(g, ca, cb);
                    self.accumulate(&mut cot, parents[1], db);
                }
                Op::SliceCh { start } => {
                    let total = self.value(parents[0]).shape()[1];
                    let d = self.pad_ch(g, start, total);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::PadCh { start } => {
                    let len = self.value(parents[0]).shape()[1];
                    let d = self.slice_ch(g, start, len);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::MaxPool2 { idx, in_hw } => {
                    let d = self.max_unpool2(g, idx, in_hw);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::MaxUnpool2 { idx, pooled_hw } => {
                    let d = self.pool_gather(g, idx, pooled_hw);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::PoolGather { idx } => {
                    let in_hw = {
                        let s = self.value(parents[0]).shape();
                        (s[2], s[3])
                    };
                    let d = self.max_unpool2(g, idx, in_hw);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::Reshape => {
                    let shape = self.value(parents[0]).shape().to_vec();
                    let d = self.reshape(g, &shape);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::Sum => {
                    let shape = self.value(parents[0]).shape().to_vec();
                    let d = self.broadcast_to(g, shape);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::BroadcastTo => {
                    let d = self.sum_all(g);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::SumPerSample => {
                    let shape = self.value(parents[0]).shape().to_vec();
                    let d = self.broadcast_per_sample(g, shape);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::BroadcastPerSample => {
                    let d = self.sum_per_sample(g);
                    self.accumulate(&mut cot, parents[0], d);
                }
                Op::MulPerSample => {
                    let (x, s) = (parents[0], parents[1]);
                    let dx = self.mul_per_sample(g, s);
                    self.accumulate(&mut cot, x, dx);
                    let gx = self.mul(g, x);
                    let ds = self.sum_per_sample(gx);
                    self.accumulate(&mut cot, s, ds);
                }
            }
        }

        wrt.iter()
            .map(|w| match cot.get(w.index()).copied().flatten() {
                Some(id) => id,
                None => self.zeros_like(*w),
            })
            .collect()
    }

    fn accumulate(&mut self, cot: &mut [Option<NodeId>], parent: NodeId, contrib: NodeId) {
        if !self.nodes[parent.index()].needs_grad {
            return;
        }
        let slot = &mut cot[parent.index()];
        *slot = Some(match *slot {
            None => contrib,
            Some(prev) => self.add(prev, contrib),
        });
    }
}
