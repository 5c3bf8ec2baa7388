//! Shared building blocks for the separator and critics: parameter
//! containers, fan-in-scaled initialization, and the parameter-visiting
//! contract the optimizer and graph binding rely on.

use ndarray::{Array1, Array2, Array4, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeId};

/// Uniform fan-in-scaled draw: `U(-sqrt(6/fan_in), +sqrt(6/fan_in))`.
pub fn fan_in_uniform(rng: &mut ChaCha20Rng, fan_in: usize) -> impl FnMut() -> f64 + '_ {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    move || rng.random_range(-bound..bound)
}

/// Convolution parameters. For a forward convolution the weight layout is
/// `[out_ch, in_ch, kh, kw]`; for a transposed convolution it is
/// `[in_ch, out_ch, kh, kw]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvParams {
    pub w: Array4<f64>,
    pub b: Array1<f64>,
}

impl ConvParams {
    /// Forward-convolution parameters, `[co, ci, kh, kw]`.
    pub fn conv(rng: &mut ChaCha20Rng, co: usize, ci: usize, kh: usize, kw: usize) -> Self {
        let mut draw = fan_in_uniform(rng, ci * kh * kw);
        let w = Array4::from_shape_simple_fn((co, ci, kh, kw), &mut draw);
        ConvParams {
            w,
            b: Array1::zeros(co),
        }
    }

    /// Transposed-convolution parameters, `[zc, yc, kh, kw]`.
    pub fn transposed(rng: &mut ChaCha20Rng, zc: usize, yc: usize, kh: usize, kw: usize) -> Self {
        let mut draw = fan_in_uniform(rng, zc * kh * kw);
        let w = Array4::from_shape_simple_fn((zc, yc, kh, kw), &mut draw);
        ConvParams {
            w,
            b: Array1::zeros(yc),
        }
    }
}

/// Dense-layer parameters, `w: [in, out]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenseParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DenseParams {
    pub fn new(rng: &mut ChaCha20Rng, n_in: usize, n_out: usize) -> Self {
        let mut draw = fan_in_uniform(rng, n_in);
        let w = Array2::from_shape_simple_fn((n_in, n_out), &mut draw);
        DenseParams {
            w,
            b: Array1::zeros(n_out),
        }
    }
}

/// Uniform access to a model's parameter tensors in a fixed order. The graph
/// binding, the optimizer state, and checkpoint hashing all index parameters
/// by their position in this traversal.
pub trait ParamSet {
    fn visit(&self, f: &mut dyn FnMut(ArrayViewD<'_, f64>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(ArrayViewMutD<'_, f64>));

    /// Number of parameter tensors.
    fn tensor_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Number of scalar parameters.
    fn scalar_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |v| n += v.len());
        n
    }
}

/// Enters every parameter tensor of `params` into the graph, in traversal
/// order. Trainable bindings are differentiation roots; constant bindings
/// freeze the model (e.g. the critic while the separator trains).
pub fn bind(g: &mut Graph, params: &dyn ParamSet, trainable: bool) -> Vec<NodeId> {
    let mut ids = Vec::new();
    params.visit(&mut |v: ArrayViewD<'_, f64>| {
        let arr = v.to_owned();
        ids.push(if trainable { g.var(arr) } else { g.constant(arr) });
    });
    ids
}

/// Collects the gradient arrays for a bound parameter set after a backward
/// pass, in traversal order.
pub fn collect_grads(g: &Graph, grad_ids: &[NodeId]) -> Vec<ndarray::ArrayD<f64>> {
    grad_ids.iter().map(|&id| g.value(id).to_owned()).collect()
}

/// FNV-1a hash over the exact bit patterns of every parameter, in traversal
/// order. Two models hash equal iff their parameters are bitwise identical,
/// which is the equality the training-loop separation checks care about.
pub fn param_hash(params: &dyn ParamSet) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    params.visit(&mut |v: ArrayViewD<'_, f64>| {
        for x in v.iter() {
            for b in x.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    });
    h
}

impl ParamSet for ConvParams {
    fn visit(&self, f: &mut dyn FnMut(ArrayViewD<'_, f64>)) {
        f(self.w.view().into_dyn());
        f(self.b.view().into_dyn());
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(ArrayViewMutD<'_, f64>)) {
        f(self.w.view_mut().into_dyn());
        f(self.b.view_mut().into_dyn());
    }
}

impl ParamSet for DenseParams {
    fn visit(&self, f: &mut dyn FnMut(ArrayViewD<'_, f64>)) {
        f(self.w.view().into_dyn());
        f(self.b.view().into_dyn());
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(ArrayViewMutD<'_, f64>)) {
        f(self.w.view_mut().into_dyn());
        f(self.b.view_mut().into_dyn());
    }
}
