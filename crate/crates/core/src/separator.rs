//! The separation network: a U-shaped encoder/decoder over log-magnitude
//! spectrogram excerpts that emits one non-negative magnitude grid per
//! source.
//!
//! All convolutions are unpadded, so every layer trims its input. The exact
//! sizes are not configured anywhere; [`ShapePlan::solve`] derives them from
//! the layer structure alone and the rest of the crate (window cutting,
//! evaluation tiling, the mixture splice in the decoder head) reads them
//! from the resulting plan. `ShapePlan::layer_table` renders the resolved
//! arithmetic for run logs.
//!
//! Axis conventions: excerpts are `[batch, frames, bins]`, internally lifted
//! to `[batch, channels, frames, bins]`. Interior crops are centred on the
//! time axis, so output frame `t` describes input frame `t + time_margin`.
//! On the frequency axis bin `k` keeps index `k` throughout: the input grid
//! places real bins at the bottom of the (padded) axis and the final trim
//! drops the excess top rows, so the decoder head splices mixture bin `k`
//! onto output bin `k`.

use ndarray::{Array3, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::audio::ExcerptGeometry;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::{ConvParams, ParamSet};

/// Negative-side slope of the hidden-layer activations.
pub const HIDDEN_SLOPE: f64 = 0.01;

/// Architecture of a separator. Spatial sizes are derived, not stated: see
/// [`ShapePlan::solve`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparatorSpec {
    /// Number of sources to emit.
    pub sources: usize,
    /// Number of pooling stages in the encoder.
    pub levels: usize,
    /// Channel count after the first convolution; doubles at every level.
    pub base_filters: usize,
    /// Excerpt length in STFT frames.
    pub input_frames: usize,
    /// Total FFT bins in a spectrogram frame (output covers all but the
    /// topmost).
    pub fft_bins: usize,
}

/// One decoder stage of the resolved plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderStage {
    /// Size after the stride-2 expansion.
    pub up_hw: (usize, usize),
    /// Centre-crop offset applied to the matching encoder map before
    /// concatenation.
    pub skip_off: (usize, usize),
    /// Size after the stride-1 refinement convolution.
    pub refined_hw: (usize, usize),
    /// Size after trimming two border rows/columns from the refinement.
    pub out_hw: (usize, usize),
}

/// Fully resolved spatial arithmetic for a [`SeparatorSpec`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapePlan {
    /// Input grid `(frames, bins)` the network consumes. The bin count is
    /// the smallest padding of the spectrum that keeps every pooling exact.
    pub input_hw: (usize, usize),
    /// Feature-map sizes after the initial convolution and after each
    /// down-sampling stage (`levels + 1` entries).
    pub enc_hw: Vec<(usize, usize)>,
    /// Channel counts matching `enc_hw`.
    pub enc_ch: Vec<usize>,
    /// Decoder stages, bottom-up.
    pub stages: Vec<DecoderStage>,
    /// Decoder output before the final frequency trim.
    pub pre_trim_hw: (usize, usize),
    /// Final output grid `(frames, bins)` per source.
    pub out_hw: (usize, usize),
    /// Frames discarded from each end of the input's time axis: output
    /// frame `t` is centred on input frame `t + time_margin`.
    pub time_margin: usize,
}

impl ShapePlan {
    /// Walks the layer structure and resolves every spatial size.
    ///
    /// Time axis, encoder: `conv3 (-2)`, then per level `pool (÷2, must be
    /// exact)` and `conv3 (-2)`. Decoder, per stage: `expand ×2`, concat
    /// with the centre-cropped skip, `refine (+2)`, trim 2 per side — net
    /// `t → 2t - 2`.
    ///
    /// Frequency axis: the same chain, but the input size is free. The
    /// solver picks the smallest bottom size whose decoder chain reaches at
    /// least `fft_bins - 1` and walks it back up through the encoder; the
    /// surplus rows are trimmed at the end. Working back through `×2` stages
    /// keeps every pooled size even by construction.
    pub fn solve(spec: &SeparatorSpec) -> Result<Self> {
        if spec.sources == 0 || spec.levels == 0 || spec.base_filters == 0 {
            return Err(Error::Model(
                "separator needs at least one source, one level, one filter".into(),
            ));
        }
        if spec.fft_bins < 2 {
            return Err(Error::Model("fft_bins must be at least 2".into()));
        }
        let l = spec.levels;
        let out_bins = spec.fft_bins - 1;

        // Frequency axis, solved backwards. A decoder chain of `l` stages
        // maps a bottom size f to 2^l * f - 2 * (2^l - 1); invert at >=
        // out_bins and round up.
        let pow = 1usize << l;
        let bottom_f = (out_bins + 2 * (pow - 1)).div_ceil(pow);
        let mut enc_f = vec![0usize; l + 1];
        enc_f[l] = bottom_f;
        for i in (0..l).rev() {
            enc_f[i] = 2 * (enc_f[i + 1] + 2);
        }
        let input_bins = enc_f[0] + 2;

        // Time axis, walked forwards from the given excerpt length.
        let mut enc_t = vec![0usize; l + 1];
        if spec.input_frames < 3 {
            return Err(Error::Model(format!(
                "input_frames {} leaves nothing after the first convolution",
                spec.input_frames
            )));
        }
        enc_t[0] = spec.input_frames - 2;
        for i in 1..=l {
            let t = enc_t[i - 1];
            if !t.is_multiple_of(2) {
                return Err(Error::Model(format!(
                    "input_frames {}: level {} receives {} frames, which 2x2 \
                     pooling cannot halve exactly",
                    spec.input_frames, i, t
                )));
            }
            if t / 2 < 3 {
                return Err(Error::Model(format!(
                    "input_frames {} is too short for {} levels",
                    spec.input_frames, l
                )));
            }
            enc_t[i] = t / 2 - 2;
        }

        let enc_hw: Vec<(usize, usize)> =
            enc_t.iter().zip(&enc_f).map(|(&t, &f)| (t, f)).collect();
        let enc_ch: Vec<usize> = (0..=l).map(|i| spec.base_filters << i).collect();

        let mut stages = Vec::with_capacity(l);
        let mut d = enc_hw[l];
        for j in 0..l {
            let up = (2 * d.0, 2 * d.1);
            let skip = enc_hw[l - 1 - j];
            if skip.0 < up.0 || skip.1 < up.1 {
                return Err(Error::Model(format!(
                    "decoder stage {} outgrows its skip connection ({:?} vs {:?})",
                    j, up, skip
                )));
            }
            debug_assert!((skip.0 - up.0).is_multiple_of(2) && (skip.1 - up.1).is_multiple_of(2));
            let skip_off = ((skip.0 - up.0) / 2, (skip.1 - up.1) / 2);
            let refined = (up.0 + 2, up.1 + 2);
            if up.0 < 3 || up.1 < 3 {
                return Err(Error::Model(format!(
                    "decoder stage {} output {:?} has nothing left after trimming",
                    j, up
                )));
            }
            let out = (up.0 - 2, up.1 - 2);
            stages.push(DecoderStage {
                up_hw: up,
                skip_off,
                refined_hw: refined,
                out_hw: out,
            });
            d = out;
        }

        debug_assert!(d.1 >= out_bins, "frequency solver under-provisioned");
        let out_hw = (d.0, out_bins);
        debug_assert!((spec.input_frames - d.0).is_multiple_of(2));
        let time_margin = (spec.input_frames - d.0) / 2;

        Ok(ShapePlan {
            input_hw: (spec.input_frames, input_bins),
            enc_hw,
            enc_ch,
            stages,
            pre_trim_hw: d,
            out_hw,
            time_margin,
        })
    }

    /// The excerpt-cutting contract implied by this plan.
    pub fn geometry(&self) -> ExcerptGeometry {
        ExcerptGeometry {
            input_frames: self.input_hw.0,
            input_bins: self.input_hw.1,
            out_frames: self.out_hw.0,
            out_bins: self.out_hw.1,
            time_margin: self.time_margin,
        }
    }

    /// Renders the resolved layer arithmetic as an aligned text table.
    pub fn layer_table(&self, spec: &SeparatorSpec) -> String {
        let mut s = String::new();
        let mut row = |name: &str, ch: String, hw: (usize, usize)| {
            let _ = writeln!(s, "{name:<28} {ch:>9}  {:>4} x {:<4}", hw.0, hw.1);
        };
        row("input", "1".into(), self.input_hw);
        row("conv 3x3", self.enc_ch[0].to_string(), self.enc_hw[0]);
        for i in 1..self.enc_hw.len() {
            let pooled = (self.enc_hw[i - 1].0 / 2, self.enc_hw[i - 1].1 / 2);
            row(&format!("pool 2x2 [{i}]"), self.enc_ch[i - 1].to_string(), pooled);
            row(&format!("conv 3x3 [{i}]"), self.enc_ch[i].to_string(), self.enc_hw[i]);
        }
        for (j, st) in self.stages.iter().enumerate() {
            let ch_up = self.enc_ch[self.enc_ch.len() - 2 - j];
            row(&format!("expand 2x2 s2 [{j}]"), ch_up.to_string(), st.up_hw);
            row(
                &format!("concat skip [{j}]"),
                format!("{}", 2 * ch_up),
                st.up_hw,
            );
            row(&format!("refine 3x3 [{j}]"), ch_up.to_string(), st.refined_hw);
            row(&format!("trim 2/side [{j}]"), ch_up.to_string(), st.out_hw);
        }
        row("frequency trim", self.enc_ch[0].to_string(), self.out_hw);
        row(
            "concat mixture window",
            format!("{}", self.enc_ch[0] + 1),
            self.out_hw,
        );
        row(
            &format!("{} x conv 1x1 + relu", spec.sources),
            format!("{}x1", spec.sources),
            self.out_hw,
        );
        let _ = writeln!(s, "time margin: {} frames per side", self.time_margin);
        s
    }
}

/// U-shaped separation network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparatorModel {
    pub spec: SeparatorSpec,
    pub plan: ShapePlan,
    initial: ConvParams,
    downs: Vec<ConvParams>,
    expands: Vec<ConvParams>,
    refines: Vec<ConvParams>,
    heads: Vec<ConvParams>,
}

impl SeparatorModel {
    /// Builds a freshly initialized model. All randomness comes from `rng`.
    pub fn new(spec: SeparatorSpec, rng: &mut ChaCha20Rng) -> Result<Self> {
        let plan = ShapePlan::solve(&spec)?;
        let l = spec.levels;
        let ch = &plan.enc_ch;
        let initial = ConvParams::conv(rng, ch[0], 1, 3, 3);
        let downs = (0..l)
            .map(|i| ConvParams::conv(rng, ch[i + 1], ch[i], 3, 3))
            .collect();
        let expands = (0..l)
            .map(|j| ConvParams::transposed(rng, ch[l - j], ch[l - 1 - j], 2, 2))
            .collect();
        let refines = (0..l)
            .map(|j| ConvParams::transposed(rng, ch[l - j], ch[l - 1 - j], 3, 3))
            .collect();
        let heads = (0..spec.sources)
            .map(|_| ConvParams::conv(rng, 1, ch[0] + 1, 1, 1))
            .collect();
        Ok(SeparatorModel {
            spec,
            plan,
            initial,
            downs,
            expands,
            refines,
            heads,
        })
    }

    /// Convenience constructor seeding its own generator.
    pub fn seeded(spec: SeparatorSpec, seed: u64) -> Result<Self> {
        Self::new(spec, &mut ChaCha20Rng::seed_from_u64(seed))
    }

    /// Builds the forward pass. `x` must be `[batch, frames, bins]` matching
    /// the plan's input grid; `vars` must come from binding this model's
    /// parameters in traversal order. Returns one `[batch, frames, bins]`
    /// node per source.
    pub fn forward_node(&self, g: &mut Graph, vars: &[NodeId], x: NodeId) -> Vec<NodeId> {
        assert_eq!(
            vars.len(),
            self.tensor_count(),
            "binding does not match parameter layout"
        );
        let xs = g.value(x).shape().to_vec();
        assert_eq!(xs.len(), 3, "separator input must be [batch, frames, bins]");
        assert_eq!(
            (xs[1], xs[2]),
            self.plan.input_hw,
            "separator input grid does not match the plan"
        );
        let batch = xs[0];
        let l = self.spec.levels;
        let mut cur = vars.iter().copied();
        let mut pair = move || {
            let w = cur.next().expect("parameter binding exhausted");
            let b = cur.next().expect("parameter binding exhausted");
            (w, b)
        };

        let x4 = g.reshape(x, &[batch, 1, self.plan.input_hw.0, self.plan.input_hw.1]);
        let (w0, b0) = pair();
        let mut h = conv_block(g, x4, w0, b0, (1, 1));
        let mut skips = vec![h];
        for _ in 0..l {
            let pooled = g.max_pool2(h);
            let (w, b) = pair();
            h = conv_block(g, pooled, w, b, (1, 1));
            skips.push(h);
        }

        let mut d = h;
        for j in 0..l {
            let st = &self.plan.stages[j];
            let (we, be) = pair();
            d = g.conv_t2d(d, we, (2, 2), st.up_hw);
            d = g.add_chan_bias(d, be);
            d = g.leaky_relu(d, HIDDEN_SLOPE);
            let skip = g.crop2d(skips[l - 1 - j], st.skip_off, st.up_hw);
            let cat = g.concat_ch(skip, d);
            let (wr, br) = pair();
            d = g.conv_t2d(cat, wr, (1, 1), st.refined_hw);
            d = g.add_chan_bias(d, br);
            d = g.leaky_relu(d, HIDDEN_SLOPE);
            d = g.crop2d(d, (2, 2), st.out_hw);
        }

        d = g.crop2d(d, (0, 0), self.plan.out_hw);
        let mix = g.crop2d(x4, (self.plan.time_margin, 0), self.plan.out_hw);
        let cat = g.concat_ch(d, mix);
        let (of, ob) = self.plan.out_hw;
        (0..self.spec.sources)
            .map(|_| {
                let (wh, bh) = pair();
                let y = g.conv2d(cat, wh, (1, 1));
                let y = g.add_chan_bias(y, bh);
                let y = g.relu(y);
                g.reshape(y, &[batch, of, ob])
            })
            .collect()
    }

    /// Runs the network without building gradients.
    pub fn forward(&self, x: &Array3<f64>) -> Vec<Array3<f64>> {
        let mut g = Graph::new();
        let vars = crate::nn::bind(&mut g, self, false);
        let xn = g.constant(x.clone().into_dyn());
        let outs = self.forward_node(&mut g, &vars, xn);
        outs.into_iter()
            .map(|id| {
                g.value(id)
                    .to_owned()
                    .into_dimensionality::<ndarray::Ix3>()
                    .expect("separator output rank")
            })
            .collect()
    }
}

impl ParamSet for SeparatorModel {
    fn visit(&self, f: &mut dyn FnMut(ArrayViewD<'_, f64>)) {
        self.initial.visit(f);
        for p in &self.downs {
            p.visit(f);
        }
        for j in 0..self.expands.len() {
            self.expands[j].visit(f);
            self.refines[j].visit(f);
        }
        for p in &self.heads {
            p.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(ArrayViewMutD<'_, f64>)) {
        self.initial.visit_mut(f);
        for p in &mut self.downs {
            p.visit_mut(f);
        }
        for j in 0..self.expands.len() {
            self.expands[j].visit_mut(f);
            self.refines[j].visit_mut(f);
        }
        for p in &mut self.heads {
            p.visit_mut(f);
        }
    }
}

/// Unpadded convolution + channel bias + leaky activation.
fn conv_block(g: &mut Graph, x: NodeId, w: NodeId, b: NodeId, stride: (usize, usize)) -> NodeId {
    let y = g.conv2d(x, w, stride);
    let y = g.add_chan_bias(y, b);
    g.leaky_relu(y, HIDDEN_SLOPE)
}

/// Sets every parameter of `model` to zero (test helper used to pin down
/// the output's dependence on the mixture splice).
pub fn zero_params(model: &mut SeparatorModel) {
    model.visit_mut(&mut |mut v: ArrayViewMutD<'_, f64>| v.fill(0.0));
}

/// Flattens all parameters into one vector in traversal order.
pub fn flatten_params(model: &dyn ParamSet) -> Vec<f64> {
    let mut out = Vec::new();
    model.visit(&mut |v: ArrayViewD<'_, f64>| out.extend(v.iter().copied()));
    out
}

/// Writes a flat vector (as produced by [`flatten_params`]) back into the
/// model.
pub fn unflatten_params(model: &mut dyn ParamSet, flat: &[f64]) {
    let mut pos = 0;
    model.visit_mut(&mut |mut v: ArrayViewMutD<'_, f64>| {
        let n = v.len();
        let chunk = &flat[pos..pos + n];
        for (dst, &src) in v.iter_mut().zip(chunk) {
            *dst = src;
        }
        pos += n;
    });
    assert_eq!(pos, flat.len(), "flat parameter vector length mismatch");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::nn::bind;
    use ndarray::Array3;
    use rand::Rng;

    fn canonical_spec() -> SeparatorSpec {
        SeparatorSpec {
            sources: 2,
            levels: 4,
            base_filters: 16,
            input_frames: 158,
            fft_bins: 257,
        }
    }

    fn tiny_spec() -> SeparatorSpec {
        SeparatorSpec {
            sources: 2,
            levels: 1,
            base_filters: 2,
            input_frames: 10,
            fft_bins: 17,
        }
    }

    #[test]
    fn canonical_plan_resolves_expected_sizes() {
        let plan = ShapePlan::solve(&canonical_spec()).unwrap();
        assert_eq!(plan.input_hw, (158, 350));
        assert_eq!(
            plan.enc_hw,
            vec![(156, 348), (76, 172), (36, 84), (16, 40), (6, 18)]
        );
        assert_eq!(plan.enc_ch, vec![16, 32, 64, 128, 256]);
        assert_eq!(plan.pre_trim_hw, (66, 258));
        assert_eq!(plan.out_hw, (66, 256));
        assert_eq!(plan.time_margin, 46);
        let first = plan.stages[0];
        assert_eq!(first.up_hw, (12, 36));
        assert_eq!(first.skip_off, (2, 2));
        assert_eq!(first.refined_hw, (14, 38));
        assert_eq!(first.out_hw, (10, 34));
        let last = plan.stages[3];
        assert_eq!(last.up_hw, (68, 260));
        assert_eq!(last.skip_off, (44, 44));
        assert_eq!(last.out_hw, (66, 258));
    }

    #[test]
    fn two_level_plan_resolves_expected_sizes() {
        let spec = SeparatorSpec {
            sources: 2,
            levels: 2,
            base_filters: 8,
            input_frames: 54,
            fft_bins: 257,
        };
        let plan = ShapePlan::solve(&spec).unwrap();
        assert_eq!(plan.input_hw, (54, 278));
        assert_eq!(plan.enc_hw, vec![(52, 276), (24, 136), (10, 66)]);
        assert_eq!(plan.out_hw, (34, 256));
        assert_eq!(plan.time_margin, 10);
    }

    #[test]
    fn rejects_frame_counts_that_break_pooling() {
        for frames in [157, 159, 160, 53] {
            let spec = SeparatorSpec {
                input_frames: frames,
                ..canonical_spec()
            };
            assert!(
                ShapePlan::solve(&spec).is_err(),
                "frames {frames} should not satisfy the pooling chain"
            );
        }
        // The two valid lengths bracketing 158 differ by 32 = 2^(levels+1).
        for frames in [126, 190] {
            let spec = SeparatorSpec {
                input_frames: frames,
                ..canonical_spec()
            };
            assert!(ShapePlan::solve(&spec).is_ok());
        }
    }

    #[test]
    fn layer_table_lists_every_stage() {
        let spec = canonical_spec();
        let plan = ShapePlan::solve(&spec).unwrap();
        let table = plan.layer_table(&spec);
        assert!(table.contains("158"), "{table}");
        assert!(table.contains("350"), "{table}");
        assert!(table.contains("256"), "{table}");
        assert!(table.contains("time margin: 46"), "{table}");
        assert_eq!(table.lines().count(), 2 + 2 * 4 + 4 * 4 + 3 + 1);
    }

    #[test]
    fn forward_produces_planned_grids() {
        let spec = SeparatorSpec {
            sources: 3,
            levels: 2,
            base_filters: 3,
            input_frames: 22,
            fft_bins: 33,
        };
        let model = SeparatorModel::seeded(spec, 11).unwrap();
        let (f, b) = model.plan.input_hw;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = Array3::from_shape_simple_fn((2, f, b), || rng.random_range(0.0..1.0));
        let outs = model.forward(&x);
        assert_eq!(outs.len(), 3);
        for o in &outs {
            assert_eq!(o.dim(), (2, model.plan.out_hw.0, model.plan.out_hw.1));
            assert!(o.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn zeroed_model_emits_zeros() {
        let mut model = SeparatorModel::seeded(tiny_spec(), 3).unwrap();
        zero_params(&mut model);
        let (f, b) = model.plan.input_hw;
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let x = Array3::from_shape_simple_fn((1, f, b), || rng.random_range(-1.0..1.0));
        for o in model.forward(&x) {
            assert!(o.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn initialization_is_seed_deterministic() {
        let a = SeparatorModel::seeded(canonical_spec(), 42).unwrap();
        let b = SeparatorModel::seeded(canonical_spec(), 42).unwrap();
        let c = SeparatorModel::seeded(canonical_spec(), 43).unwrap();
        assert_eq!(flatten_params(&a), flatten_params(&b));
        assert_ne!(flatten_params(&a), flatten_params(&c));
    }

    #[test]
    fn parameter_count_matches_layer_arithmetic() {
        let spec = canonical_spec();
        let model = SeparatorModel::seeded(spec, 0).unwrap();
        let ch = &model.plan.enc_ch;
        let mut expect = ch[0] * 9 + ch[0]; // initial conv
        for i in 0..spec.levels {
            expect += ch[i + 1] * ch[i] * 9 + ch[i + 1];
        }
        for j in 0..spec.levels {
            let hi = ch[spec.levels - j];
            let lo = ch[spec.levels - 1 - j];
            expect += hi * lo * 4 + lo; // expansion
            expect += hi * lo * 9 + lo; // refinement after concat
        }
        expect += spec.sources * (ch[0] + 1 + 1); // heads
        assert_eq!(model.scalar_count(), expect);
    }

    #[test]
    fn outputs_shift_with_the_input_window() {
        // Two excerpts cut from one long grid, offset by the total pooling
        // stride, must agree exactly on their overlapping output frames.
        let spec = SeparatorSpec {
            sources: 2,
            levels: 2,
            base_filters: 3,
            input_frames: 30,
            fft_bins: 33,
        };
        let model = SeparatorModel::seeded(spec, 21).unwrap();
        let (f, b) = model.plan.input_hw;
        let stride = 1usize << spec.levels;
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let track = Array3::from_shape_simple_fn((1, f + stride, b), || {
            rng.random_range(0.0..2.0)
        });
        let win_a = track.slice(ndarray::s![.., 0..f, ..]).to_owned();
        let win_b = track.slice(ndarray::s![.., stride..f + stride, ..]).to_owned();
        let out_a = model.forward(&win_a);
        let out_b = model.forward(&win_b);
        let of = model.plan.out_hw.0;
        for (a, b) in out_a.iter().zip(&out_b) {
            let a_tail = a.slice(ndarray::s![.., stride..of, ..]);
            let b_head = b.slice(ndarray::s![.., 0..of - stride, ..]);
            for (x, y) in a_tail.iter().zip(b_head.iter()) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn batched_forward_matches_single_excerpts() {
        let model = SeparatorModel::seeded(tiny_spec(), 5).unwrap();
        let (f, b) = model.plan.input_hw;
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let batch = Array3::from_shape_simple_fn((3, f, b), || rng.random_range(0.0..1.0));
        let whole = model.forward(&batch);
        for i in 0..3 {
            let single = batch.slice(ndarray::s![i..i + 1, .., ..]).to_owned();
            let one = model.forward(&single);
            for (w, o) in whole.iter().zip(&one) {
                let row = w.slice(ndarray::s![i..i + 1, .., ..]);
                for (x, y) in row.iter().zip(o.iter()) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let model = SeparatorModel::seeded(tiny_spec(), 9).unwrap();
        let (f, b) = model.plan.input_hw;
        let mut rng = ChaCha20Rng::seed_from_u64(30);
        let x = Array3::from_shape_simple_fn((2, f, b), || rng.random_range(0.0..1.0));
        let target: Vec<Array3<f64>> = (0..2)
            .map(|_| {
                Array3::from_shape_simple_fn(
                    (2, model.plan.out_hw.0, model.plan.out_hw.1),
                    || rng.random_range(0.0..1.0),
                )
            })
            .collect();

        let loss_of = |m: &SeparatorModel| -> f64 {
            let outs = m.forward(&x);
            let mut acc = 0.0;
            let mut n = 0usize;
            for (o, t) in outs.iter().zip(&target) {
                acc += (o - t).mapv(|d| d * d).sum();
                n += o.len();
            }
            acc / n as f64
        };

        // Analytic gradients through the graph.
        let mut g = Graph::new();
        let vars = bind(&mut g, &model, true);
        let xn = g.constant(x.clone().into_dyn());
        let outs = model.forward_node(&mut g, &vars, xn);
        let total: usize = outs.iter().map(|&o| g.value(o).len()).sum();
        let mut parts = Vec::new();
        for (o, t) in outs.iter().zip(&target) {
            let tn = g.constant(t.clone().into_dyn());
            let d = g.sub(*o, tn);
            let sq = g.mul(d, d);
            parts.push(g.sum_all(sq));
        }
        let mut acc = parts[0];
        for p in &parts[1..] {
            acc = g.add(acc, *p);
        }
        let loss = g.scale(acc, 1.0 / total as f64);
        let grads = g.backward(loss, &vars);
        let mut flat_grad = Vec::new();
        for gid in grads {
            flat_grad.extend(g.value(gid).iter().copied());
        }

        // Finite differences over every scalar parameter.
        let base = flatten_params(&model);
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        let mut probe = model.clone();
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
    fn checkpoint_roundtrip_is_bit_identical() {
        let model = SeparatorModel::seeded(canonical_spec(), 77).unwrap();
        let bytes = bincode::serialize(&model).unwrap();
        let restored: SeparatorModel = bincode::deserialize(&bytes).unwrap();
        assert_eq!(restored.spec, model.spec);
        assert_eq!(restored.plan, model.plan);
        let a = flatten_params(&model);
        let b = flatten_params(&restored);
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn geometry_matches_plan() {
        let plan = ShapePlan::solve(&canonical_spec()).unwrap();
        let geo = plan.geometry();
        assert_eq!(geo.input_frames, 158);
        assert_eq!(geo.input_bins, 350);
        assert_eq!(geo.out_frames, 66);
        assert_eq!(geo.out_bins, 256);
        assert_eq!(geo.time_margin, 46);
        assert_eq!(geo.target_start(0), 46);
    }
}
