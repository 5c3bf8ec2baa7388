//! Per-source critics: convolutional networks scoring magnitude excerpts
//! with a single unbounded real number. Scores are kept 1-Lipschitz-ish by
//! the gradient penalty in the loss module, not by weight clipping, so the
//! layers here are ordinary convolutions and dense maps.
//!
//! A critic is a plain layer list, which keeps pathological hand-built
//! critics (identity sums, single dense maps) expressible for tests while
//! [`CriticModel::new`] provides the standard stack used in training.

use ndarray::{Array1, Array2, Array3, ArrayViewD, ArrayViewMutD};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeId};
use crate::nn::{ConvParams, DenseParams, ParamSet};

/// Negative-side slope of the critic activations.
pub const CRITIC_SLOPE: f64 = 0.2;

/// Zero padding applied before a convolution, per edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgePad {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl EdgePad {
    pub fn is_zero(&self) -> bool {
        self.top == 0 && self.bottom == 0 && self.left == 0 && self.right == 0
    }

    /// Padding that keeps `out = ceil(in / stride)` for the given kernel,
    /// splitting the surplus with the larger share at the high side.
    pub fn same(in_hw: (usize, usize), kernel: (usize, usize), stride: (usize, usize)) -> Self {
        let total = |n: usize, k: usize, s: usize| {
            let out = n.div_ceil(s);
            ((out - 1) * s + k).saturating_sub(n)
        };
        let th = total(in_hw.0, kernel.0, stride.0);
        let tw = total(in_hw.1, kernel.1, stride.1);
        EdgePad {
            top: th / 2,
            bottom: th - th / 2,
            left: tw / 2,
            right: tw - tw / 2,
        }
    }
}

/// One critic layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum CriticLayer {
    Conv {
        params: ConvParams,
        stride: (usize, usize),
        pad: EdgePad,
    },
    Dense(DenseParams),
    LeakyRelu(f64),
    Flatten,
}

/// A critic: a layer list over `[batch, frames, bins]` excerpts, ending in
/// one score per excerpt.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticModel {
    pub input_hw: (usize, usize),
    pub layers: Vec<CriticLayer>,
}

impl CriticModel {
    /// Standard critic: four stride-2 4x4 convolutions doubling the channel
    /// count from `base_filters`, two stride-(2,1) 4x2 convolutions keeping
    /// it, then dense layers down to a single score. All convolutions use
    /// size-preserving padding, so the spatial chain is `ceil(n / stride)`
    /// per stage.
    pub fn new(input_hw: (usize, usize), base_filters: usize, rng: &mut ChaCha20Rng) -> Self {
        let mut layers = Vec::new();
        let mut hw = input_hw;
        let mut ch = 1usize;
        let push_conv = |layers: &mut Vec<CriticLayer>,
                             hw: &mut (usize, usize),
                             ch: &mut usize,
                             co: usize,
                             kernel: (usize, usize),
                             stride: (usize, usize),
                             rng: &mut ChaCha20Rng| {
            let pad = EdgePad::same(*hw, kernel, stride);
            layers.push(CriticLayer::Conv {
                params: ConvParams::conv(rng, co, *ch, kernel.0, kernel.1),
                stride,
                pad,
            });
            layers.push(CriticLayer::LeakyRelu(CRITIC_SLOPE));
            *hw = (hw.0.div_ceil(stride.0), hw.1.div_ceil(stride.1));
            *ch = co;
        };
        for i in 0..4 {
            push_conv(
                &mut layers,
                &mut hw,
                &mut ch,
                base_filters << i,
                (4, 4),
                (2, 2),
                rng,
            );
        }
        for _ in 0..2 {
            let keep = ch;
            push_conv(&mut layers, &mut hw, &mut ch, keep, (4, 2), (2, 1), rng);
        }
        layers.push(CriticLayer::Flatten);
        let flat = ch * hw.0 * hw.1;
        layers.push(CriticLayer::Dense(DenseParams::new(rng, flat, 32)));
        layers.push(CriticLayer::LeakyRelu(CRITIC_SLOPE));
        layers.push(CriticLayer::Dense(DenseParams::new(rng, 32, 1)));
        CriticModel { input_hw, layers }
    }

    /// Builds the score for a bound input node. `x` must be
    /// `[batch, frames, bins]` with this critic's grid; returns `[batch]`.
    pub fn score_node(&self, g: &mut Graph, vars: &[NodeId], x: NodeId) -> NodeId {
        assert_eq!(
            vars.len(),
            self.tensor_count(),
            "binding does not match critic layout"
        );
        let xs = g.value(x).shape().to_vec();
        assert_eq!(xs.len(), 3, "critic input must be [batch, frames, bins]");
        assert_eq!(
            (xs[1], xs[2]),
            self.input_hw,
            "critic input grid mismatch"
        );
        let batch = xs[0];
        let mut cur = vars.iter().copied();
        let mut h = g.reshape(x, &[batch, 1, xs[1], xs[2]]);
        for layer in &self.layers {
            match layer {
                CriticLayer::Conv { stride, pad, .. } => {
                    let w = cur.next().expect("critic binding exhausted");
                    let b = cur.next().expect("critic binding exhausted");
                    if !pad.is_zero() {
                        let hs = g.value(h).shape().to_vec();
                        let out_hw = (hs[2] + pad.top + pad.bottom, hs[3] + pad.left + pad.right);
                        h = g.pad2d(h, (pad.top, pad.left), out_hw);
                    }
                    h = g.conv2d(h, w, *stride);
                    h = g.add_chan_bias(h, b);
                }
                CriticLayer::Dense(_) => {
                    let w = cur.next().expect("critic binding exhausted");
                    let b = cur.next().expect("critic binding exhausted");
                    h = g.matmul(h, w, false, false);
                    h = g.add_row_bias(h, b);
                }
                CriticLayer::LeakyRelu(slope) => h = g.leaky_relu(h, *slope),
                CriticLayer::Flatten => {
                    let hs = g.value(h).shape().to_vec();
                    let flat: usize = hs[1..].iter().product();
                    h = g.reshape(h, &[batch, flat]);
                }
            }
        }
        let hs = g.value(h).shape().to_vec();
        assert_eq!(
            hs,
            vec![batch, 1],
            "critic must end in one score per excerpt"
        );
        g.reshape(h, &[batch])
    }

    /// Scores a batch without building gradients.
    pub fn score(&self, x: &Array3<f64>) -> Array1<f64> {
        let mut g = Graph::new();
        let vars = crate::nn::bind(&mut g, self, false);
        let xn = g.constant(x.clone().into_dyn());
        let s = self.score_node(&mut g, &vars, xn);
        g.value(s)
            .to_owned()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("critic score rank")
    }

    /// Gradient of the summed scores with respect to the input batch:
    /// `d(sum_i D(x_i))/dx`, one grid per excerpt. Used by the saliency
    /// renderer and the penalty diagnostics.
    pub fn input_gradient(&self, x: &Array3<f64>) -> Array3<f64> {
        let mut g = Graph::new();
        let vars = crate::nn::bind(&mut g, self, false);
        let xn = g.var(x.clone().into_dyn());
        let s = self.score_node(&mut g, &vars, xn);
        let total = g.sum_all(s);
        let grads = g.backward(total, &[xn]);
        g.value(grads[0])
            .to_owned()
            .into_dimensionality::<ndarray::Ix3>()
            .expect("input gradient rank")
    }

    /// Hand-built critic computing `score(x) = sum(x)` for any input grid.
    /// Its input gradient is identically one, which makes it a convenient
    /// analytic fixture.
    pub fn summing(input_hw: (usize, usize)) -> Self {
        let flat = input_hw.0 * input_hw.1;
        CriticModel {
            input_hw,
            layers: vec![
                CriticLayer::Flatten,
                CriticLayer::Dense(DenseParams {
                    w: Array2::ones((flat, 1)),
                    b: Array1::zeros(1),
                }),
            ],
        }
    }

    /// Hand-built critic computing `score(x) = c * sum(x)`.
    pub fn scaled_summing(input_hw: (usize, usize), c: f64) -> Self {
        let mut m = Self::summing(input_hw);
        if let CriticLayer::Dense(d) = &mut m.layers[1] {
            d.w.fill(c);
        }
        m
    }
}

impl ParamSet for CriticModel {
    fn visit(&self, f: &mut dyn FnMut(ArrayViewD<'_, f64>)) {
        for layer in &self.layers {
            match layer {
                CriticLayer::Conv { params, .. } => params.visit(f),
                CriticLayer::Dense(d) => d.visit(f),
                _ => {}
            }
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(ArrayViewMutD<'_, f64>)) {
        for layer in &mut self.layers {
            match layer {
                CriticLayer::Conv { params, .. } => params.visit_mut(f),
                CriticLayer::Dense(d) => d.visit_mut(f),
                _ => {}
            }
        }
    }
}

/// Zeroes every critic parameter (test helper).
pub fn zero_params(model: &mut CriticModel) {
    model.visit_mut(&mut |mut v: ArrayViewMutD<'_, f64>| v.fill(0.0));
}

/// A tiny randomly initialized critic for gradient checks: one padded
/// strided convolution, activation, and a dense head.
pub fn tiny_critic(input_hw: (usize, usize), rng: &mut ChaCha20Rng) -> CriticModel {
    let kernel = (3, 3);
    let stride = (2, 2);
    let pad = EdgePad::same(input_hw, kernel, stride);
    let out_hw = (input_hw.0.div_ceil(stride.0), input_hw.1.div_ceil(stride.1));
    let co = 2;
    CriticModel {
        input_hw,
        layers: vec![
            CriticLayer::Conv {
                params: ConvParams::conv(rng, co, 1, kernel.0, kernel.1),
                stride,
                pad,
            },
            CriticLayer::LeakyRelu(CRITIC_SLOPE),
            CriticLayer::Flatten,
            CriticLayer::Dense(DenseParams::new(rng, co * out_hw.0 * out_hw.1, 1)),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::bind;
    use crate::separator::{flatten_params, unflatten_params};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};

    #[test]
    fn same_padding_reproduces_ceil_chain() {
        // 4x4 stride 2 over odd and even sizes.
        for n in [5usize, 6, 17, 33, 66, 256] {
            let pad = EdgePad::same((n, n), (4, 4), (2, 2));
            let padded = n + pad.top + pad.bottom;
            let out = (padded - 4) / 2 + 1;
            assert_eq!(out, n.div_ceil(2), "n = {n}");
            assert!(pad.bottom >= pad.top);
        }
        // 4x2 stride (2,1) keeps the second axis.
        let pad = EdgePad::same((5, 16), (4, 2), (2, 1));
        assert_eq!(16 + pad.left + pad.right - 2 + 1, 16);
    }

    #[test]
    fn standard_stack_resolves_expected_shapes() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let critic = CriticModel::new((66, 256), 32, &mut rng);
        // Spatial chain: 66 -> 33 -> 17 -> 9 -> 5 -> 3 -> 2 and
        // 256 -> 128 -> 64 -> 32 -> 16 -> 16 -> 16, at 256 channels.
        let dense_in = match &critic.layers[13] {
            CriticLayer::Dense(d) => d.w.nrows(),
            other => panic!("expected dense layer, got {other:?}"),
        };
        assert_eq!(dense_in, 256 * 2 * 16);
        let x = Array3::from_shape_simple_fn((2, 66, 256), || rng.random_range(0.0..1.0));
        let s = critic.score(&x);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zeroed_critic_scores_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut critic = CriticModel::new((18, 32), 4, &mut rng);
        zero_params(&mut critic);
        let x = Array3::from_shape_simple_fn((3, 18, 32), || rng.random_range(-1.0..1.0));
        assert!(critic.score(&x).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batched_scores_match_single_excerpts() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let critic = CriticModel::new((10, 16), 3, &mut rng);
        let batch = Array3::from_shape_simple_fn((4, 10, 16), || rng.random_range(-1.0..1.0));
        let whole = critic.score(&batch);
        for i in 0..4 {
            let one = critic.score(&batch.slice(ndarray::s![i..i + 1, .., ..]).to_owned());
            assert!(
                (whole[i] - one[0]).abs() < 1e-12,
                "excerpt {i}: {} vs {}",
                whole[i],
                one[0]
            );
        }
    }

    #[test]
    fn summing_critic_is_the_identity_sum() {
        let critic = CriticModel::summing((3, 5));
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let x = Array3::from_shape_simple_fn((2, 3, 5), || rng.random_range(-2.0..2.0));
        let s = critic.score(&x);
        for i in 0..2 {
            let expect: f64 = x.slice(ndarray::s![i, .., ..]).sum();
            assert!((s[i] - expect).abs() < 1e-12);
        }
        let grad = critic.input_gradient(&x);
        assert!(grad.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let critic = tiny_critic((6, 8), &mut rng);
        let x = Array3::from_shape_simple_fn((3, 6, 8), || rng.random_range(-1.0..1.0));

        let loss_of = |c: &CriticModel| c.score(&x).sum();

        let mut g = Graph::new();
        let vars = bind(&mut g, &critic, true);
        let xn = g.constant(x.clone().into_dyn());
        let s = critic.score_node(&mut g, &vars, xn);
        let total = g.sum_all(s);
        let grads = g.backward(total, &vars);
        let mut flat_grad = Vec::new();
        for gid in grads {
            flat_grad.extend(g.value(gid).iter().copied());
        }

        let base = flatten_params(&critic);
        let step = 1e-5;
        let mut probe = critic.clone();
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += step;
            unflatten_params(&mut probe, &plus);
            let up = loss_of(&probe);
            let mut minus = base.clone();
            minus[i] -= step;
            unflatten_params(&mut probe, &minus);
            let down = loss_of(&probe);
            let fd = (up - down) / (2.0 * step);
            let err = (fd - flat_grad[i]).abs() / flat_grad[i].abs().max(1.0);
            worst = worst.max(err);
        }
        assert!(worst < 1e-6, "worst relative gradient error {worst}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let critic = tiny_critic((4, 6), &mut rng);
        let x = Array3::from_shape_simple_fn((2, 4, 6), || rng.random_range(-1.0..1.0));
        let analytic = critic.input_gradient(&x);
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for idx in 0..x.len() {
            let mut plus = x.clone();
            plus.as_slice_mut().unwrap()[idx] += step;
            let mut minus = x.clone();
            minus.as_slice_mut().unwrap()[idx] -= step;
            let fd = (critic.score(&plus).sum() - critic.score(&minus).sum()) / (2.0 * step);
            let a = analytic.as_slice().unwrap()[idx];
            worst = worst.max((fd - a).abs() / a.abs().max(1.0));
        }
        assert!(worst < 1e-6, "worst relative gradient error {worst}");
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_identical() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let critic = CriticModel::new((34, 256), 8, &mut rng);
        let bytes = bincode::serialize(&critic).unwrap();
        let restored: CriticModel = bincode::deserialize(&bytes).unwrap();
        let a = flatten_params(&critic);
        let b = flatten_params(&restored);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(restored.input_hw, critic.input_hw);
    }
}
