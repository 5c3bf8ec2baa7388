//! Training objectives: the supervised reconstruction term, the additivity
//! penalty, and the adversarial machinery (critic objective with one-sided
//! gradient penalty, separator objective, and the distance estimate used
//! for monitoring).
//!
//! Every term exists in two forms: a `_node` builder that extends a graph
//! (used by the training loop, where gradients must flow), and a plain
//! array function that evaluates the same expression on a throwaway graph
//! (used by tests, validation, and reporting). The array forms are exact
//! aliases of the node forms by construction.

use ndarray::{Array1, Array3};
use serde::{Deserialize, Serialize};

use crate::critic::CriticModel;
use crate::graph::{Graph, NodeId};
use crate::nn::bind;

/// Numerical guard inside square roots; keeps the norm differentiable at
/// zero without visibly biasing any realistic magnitude.
pub const NORM_EPS: f64 = 1e-12;

/// Weight of the gradient penalty in the critic objective.
pub const DEFAULT_PENALTY_WEIGHT: f64 = 10.0;

/// How the supervised term aggregates per-element errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupervisedNorm {
    /// Mean squared error over every element of every source.
    Mse,
    /// Mean over the batch of the per-excerpt Euclidean distance, summed
    /// over sources inside the root.
    L2,
}

impl std::fmt::Display for SupervisedNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SupervisedNorm::Mse => "mse",
            SupervisedNorm::L2 => "l2",
        })
    }
}

impl std::str::FromStr for SupervisedNorm {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "mse" => Ok(SupervisedNorm::Mse),
            "l2" => Ok(SupervisedNorm::L2),
            other => Err(crate::Error::Config(format!(
                "unknown supervised norm {other:?} (expected mse or l2)"
            ))),
        }
    }
}

/// Magnitude domain the additivity penalty measures distances in. Grids
/// arrive log-normalized either way; `Linear` maps them back through
/// `exp(x) - 1` first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdditiveDomain {
    /// Compare summed estimates to the mixture in the log-magnitude domain,
    /// the same domain the other losses live in.
    Log,
    /// Compare in linear magnitudes, where mixing is closest to additive.
    Linear,
}

impl std::fmt::Display for AdditiveDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AdditiveDomain::Log => "log",
            AdditiveDomain::Linear => "linear",
        })
    }
}

impl std::str::FromStr for AdditiveDomain {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "log" => Ok(AdditiveDomain::Log),
            "linear" => Ok(AdditiveDomain::Linear),
            other => Err(crate::Error::Config(format!(
                "unknown additive-loss domain {other:?} (expected log or linear)"
            ))),
        }
    }
}

/// Coefficients combining the separator's loss terms, plus the knobs the
/// individual terms take. The total objective is
/// `L_s + alpha * L_u + beta * L_add`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the adversarial term.
    pub alpha: f64,
    /// Weight of the additivity penalty.
    pub beta: f64,
    /// Aggregation of the supervised term.
    pub supervised_norm: SupervisedNorm,
    /// Domain of the additivity penalty.
    pub additive_domain: AdditiveDomain,
    /// Gradient-penalty weight in the critic objective.
    pub penalty_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.0,
            beta: 0.0,
            supervised_norm: SupervisedNorm::Mse,
            additive_domain: AdditiveDomain::Log,
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
        }
    }
}

/// The separator's total objective, `L_s + alpha * L_u + beta * L_add`.
/// With both weights zero this returns `l_s` exactly — the weighted terms
/// are never added, so no floating-point residue can creep in.
pub fn total_loss(l_s: f64, l_u: f64, l_add: f64, w: &LossWeights) -> f64 {
    let mut total = l_s;
    if w.alpha != 0.0 {
        total += w.alpha * l_u;
    }
    if w.beta != 0.0 {
        total += w.beta * l_add;
    }
    total
}

/// Builds the supervised reconstruction loss. `ests` and `tgts` pair up one
/// `[batch, frames, bins]` node per source.
pub fn supervised_loss_node(
    g: &mut Graph,
    ests: &[NodeId],
    tgts: &[NodeId],
    norm: SupervisedNorm,
) -> NodeId {
    assert_eq!(ests.len(), tgts.len(), "source count mismatch");
    assert!(!ests.is_empty(), "supervised loss needs at least one source");
    match norm {
        SupervisedNorm::Mse => {
            let mut acc: Option<NodeId> = None;
            let mut total = 0usize;
            for (&e, &t) in ests.iter().zip(tgts) {
                let d = g.sub(e, t);
                let sq = g.mul(d, d);
                let s = g.sum_all(sq);
                total += g.value(e).len();
                acc = Some(match acc {
                    Some(a) => g.add(a, s),
                    None => s,
                });
            }
            g.scale(acc.unwrap(), 1.0 / total as f64)
        }
        SupervisedNorm::L2 => {
            let mut acc: Option<NodeId> = None;
            for (&e, &t) in ests.iter().zip(tgts) {
                let d = g.sub(e, t);
                let sq = g.mul(d, d);
                let s = g.sum_per_sample(sq);
                acc = Some(match acc {
                    Some(a) => g.add(a, s),
                    None => s,
                });
            }
            let r = g.sqrt_eps(acc.unwrap(), NORM_EPS);
            g.mean_all(r)
        }
    }
}

/// Array form of [`supervised_loss_node`].
pub fn supervised_loss(ests: &[Array3<f64>], tgts: &[Array3<f64>], norm: SupervisedNorm) -> f64 {
    let mut g = Graph::new();
    let e: Vec<NodeId> = ests.iter().map(|a| g.constant(a.clone().into_dyn())).collect();
    let t: Vec<NodeId> = tgts.iter().map(|a| g.constant(a.clone().into_dyn())).collect();
    let l = supervised_loss_node(&mut g, &e, &t, norm);
    g.scalar(l)
}

/// Builds the additivity penalty: the mean over the batch of the Euclidean
/// distance between the summed source estimates and the mixture window.
/// Inputs are log-normalized grids; `domain` picks where the distance is
/// measured.
pub fn additive_loss_node(
    g: &mut Graph,
    ests: &[NodeId],
    mix: NodeId,
    domain: AdditiveDomain,
) -> NodeId {
    assert!(!ests.is_empty(), "additivity needs at least one source");
    let map = |g: &mut Graph, x: NodeId| match domain {
        AdditiveDomain::Log => x,
        AdditiveDomain::Linear => g.expm1(x),
    };
    let mut sum = map(g, ests[0]);
    for &e in &ests[1..] {
        let e = map(g, e);
        sum = g.add(sum, e);
    }
    let mix = map(g, mix);
    let d = g.sub(sum, mix);
    let sq = g.mul(d, d);
    let per = g.sum_per_sample(sq);
    let r = g.sqrt_eps(per, NORM_EPS);
    g.mean_all(r)
}

/// Array form of [`additive_loss_node`].
pub fn additive_loss(ests: &[Array3<f64>], mix: &Array3<f64>, domain: AdditiveDomain) -> f64 {
    let mut g = Graph::new();
    let e: Vec<NodeId> = ests.iter().map(|a| g.constant(a.clone().into_dyn())).collect();
    let m = g.constant(mix.clone().into_dyn());
    let l = additive_loss_node(&mut g, &e, m, domain);
    g.scalar(l)
}

/// Per-sample interpolates `eps_i * real_i + (1 - eps_i) * fake_i`, the
/// points at which the gradient penalty is evaluated.
pub fn interpolates(real: &Array3<f64>, fake: &Array3<f64>, eps: &[f64]) -> Array3<f64> {
    assert_eq!(real.dim(), fake.dim(), "interpolation shape mismatch");
    assert_eq!(real.dim().0, eps.len(), "one mixing weight per excerpt");
    let mut out = real.clone();
    for (i, mut plane) in out.outer_iter_mut().enumerate() {
        let f = fake.index_axis(ndarray::Axis(0), i);
        plane.zip_mut_with(&f, |r, &fv| *r = eps[i] * *r + (1.0 - eps[i]) * fv);
    }
    out
}

/// Builds the one-sided gradient penalty of a critic at the (already bound)
/// evaluation points `at`: per excerpt, the squared excess of the score's
/// input-gradient norm over 1, zero whenever the norm stays below 1;
/// averaged over the batch.
///
/// `at` must be a differentiation root (a var), since the penalty is a
/// function of the gradient taken there.
pub fn gradient_penalty_node(
    g: &mut Graph,
    critic: &CriticModel,
    vars: &[NodeId],
    at: NodeId,
) -> NodeId {
    let scores = critic.score_node(g, vars, at);
    let total = g.sum_all(scores);
    let gx = g.backward(total, &[at])[0];
    let sq = g.mul(gx, gx);
    let per = g.sum_per_sample(sq);
    let norm = g.sqrt_eps(per, NORM_EPS);
    let excess = g.add_scalar(norm, -1.0);
    let onesided = g.relu(excess);
    let pen = g.mul(onesided, onesided);
    g.mean_all(pen)
}

/// Array form of [`gradient_penalty_node`], evaluated at explicit points.
pub fn gradient_penalty_at(critic: &CriticModel, at: &Array3<f64>) -> f64 {
    let mut g = Graph::new();
    let vars = bind(&mut g, critic, false);
    let at_n = g.var(at.clone().into_dyn());
    let p = gradient_penalty_node(&mut g, critic, &vars, at_n);
    g.scalar(p)
}

/// Array form of the penalty at per-sample interpolates of a real and a
/// generated batch.
pub fn gradient_penalty(
    critic: &CriticModel,
    real: &Array3<f64>,
    fake: &Array3<f64>,
    eps: &[f64],
) -> f64 {
    gradient_penalty_at(critic, &interpolates(real, fake, eps))
}

/// Per-excerpt input-gradient norms of the critic's score at `at` — the
/// quantity the penalty pushes below 1. Exposed for diagnostics.
pub fn score_gradient_norms(critic: &CriticModel, at: &Array3<f64>) -> Array1<f64> {
    let grad = critic.input_gradient(at);
    Array1::from_iter(
        grad.outer_iter()
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()),
    )
}

/// Builds the critic objective
/// `mean D(fake) - mean D(real) + weight * penalty(at)`.
///
/// `real` and `fake` are typically constants (the critic trains, the data
/// does not), `at` must be a var holding the interpolates, and `vars` the
/// critic's trainable binding. Minimizing this pushes real scores up, fake
/// scores down, and the score's slope towards the unit ball.
pub fn critic_loss_node(
    g: &mut Graph,
    critic: &CriticModel,
    vars: &[NodeId],
    real: NodeId,
    fake: NodeId,
    at: NodeId,
    weight: f64,
) -> NodeId {
    let s_fake = critic.score_node(g, vars, fake);
    let s_real = critic.score_node(g, vars, real);
    let m_fake = g.mean_all(s_fake);
    let m_real = g.mean_all(s_real);
    let gap = g.sub(m_fake, m_real);
    let pen = gradient_penalty_node(g, critic, vars, at);
    let wpen = g.scale(pen, weight);
    g.add(gap, wpen)
}

/// Array form of [`critic_loss_node`].
pub fn critic_loss(
    critic: &CriticModel,
    real: &Array3<f64>,
    fake: &Array3<f64>,
    eps: &[f64],
    weight: f64,
) -> f64 {
    let mut g = Graph::new();
    let vars = bind(&mut g, critic, false);
    let r = g.constant(real.clone().into_dyn());
    let f = g.constant(fake.clone().into_dyn());
    let at = g.var(interpolates(real, fake, eps).into_dyn());
    let l = critic_loss_node(&mut g, critic, &vars, r, f, at, weight);
    g.scalar(l)
}

/// The critic's estimate of the distance between the real and generated
/// score distributions: `mean D(real) - mean D(fake)`. This is the
/// monitoring quantity; the critic minimizes its negation plus the penalty.
pub fn wasserstein_estimate(critic: &CriticModel, real: &Array3<f64>, fake: &Array3<f64>) -> f64 {
    let sr = critic.score(real);
    let sf = critic.score(fake);
    sr.mean().unwrap() - sf.mean().unwrap()
}

/// Builds the separator's adversarial term against one critic:
/// `-mean D(fake)`. The critic's binding should be constant here; only the
/// generated batch carries gradients back to the separator.
pub fn adversarial_loss_node(
    g: &mut Graph,
    critic: &CriticModel,
    vars: &[NodeId],
    fake: NodeId,
) -> NodeId {
    let s = critic.score_node(g, vars, fake);
    let m = g.mean_all(s);
    g.neg(m)
}

/// Array form of the separator's adversarial term summed over the critics
/// that exist: `sum_k -mean D_k(fake_k)`.
pub fn separator_adversarial_loss(critics: &[&CriticModel], fakes: &[&Array3<f64>]) -> f64 {
    assert_eq!(critics.len(), fakes.len(), "one generated batch per critic");
    critics
        .iter()
        .zip(fakes)
        .map(|(c, f)| -c.score(f).mean().unwrap())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::{tiny_critic, CriticModel};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rnd(shape: (usize, usize, usize), seed: u64, lo: f64, hi: f64) -> Array3<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Array3::from_shape_simple_fn(shape, || rng.random_range(lo..hi))
    }

    #[test]
    fn supervised_mse_matches_direct_computation() {
        let e = vec![rnd((2, 3, 4), 1, 0.0, 1.0), rnd((2, 3, 4), 2, 0.0, 1.0)];
        let t = vec![rnd((2, 3, 4), 3, 0.0, 1.0), rnd((2, 3, 4), 4, 0.0, 1.0)];
        let got = supervised_loss(&e, &t, SupervisedNorm::Mse);
        let mut acc = 0.0;
        let mut n = 0;
        for (ek, tk) in e.iter().zip(&t) {
            acc += (ek - tk).mapv(|d| d * d).sum();
            n += ek.len();
        }
        assert!((got - acc / n as f64).abs() < 1e-12);
        assert_eq!(supervised_loss(&e, &e, SupervisedNorm::Mse), 0.0);
    }

    #[test]
    fn supervised_l2_matches_direct_computation() {
        let e = vec![rnd((3, 2, 5), 5, 0.0, 1.0), rnd((3, 2, 5), 6, 0.0, 1.0)];
        let t = vec![rnd((3, 2, 5), 7, 0.0, 1.0), rnd((3, 2, 5), 8, 0.0, 1.0)];
        let got = supervised_loss(&e, &t, SupervisedNorm::L2);
        let mut mean = 0.0;
        for i in 0..3 {
            let mut sq = 0.0;
            for (ek, tk) in e.iter().zip(&t) {
                let d = &ek.index_axis(ndarray::Axis(0), i) - &tk.index_axis(ndarray::Axis(0), i);
                sq += d.mapv(|v| v * v).sum();
            }
            mean += (sq + NORM_EPS).sqrt();
        }
        mean /= 3.0;
        assert!((got - mean).abs() < 1e-12);
    }

    #[test]
    fn additive_loss_measures_the_sum_deviation() {
        // Two estimates that each equal the mixture: the summed estimate
        // overshoots by exactly the mixture, so the loss is the mean
        // mixture norm.
        let mix = rnd((4, 3, 6), 9, 0.1, 1.0);
        let ests = vec![mix.clone(), mix.clone()];
        let got = additive_loss(&ests, &mix, AdditiveDomain::Log);
        let expect = mix
            .outer_iter()
            .map(|p| (p.iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt())
            .sum::<f64>()
            / 4.0;
        assert!((got - expect).abs() < 1e-12);

        // A perfectly additive decomposition scores the sqrt guard alone.
        let half = mix.mapv(|v| 0.5 * v);
        let perfect = additive_loss(&[half.clone(), half], &mix, AdditiveDomain::Log);
        assert!(perfect <= NORM_EPS.sqrt() + 1e-15, "{perfect}");
    }

    #[test]
    fn linear_domain_additivity_sees_through_the_log_encoding() {
        // Linear magnitudes that sum exactly to the mixture, handed over in
        // log-normalized form: the log-domain penalty sees a residual, the
        // linear-domain penalty sees none.
        let a = rnd((3, 2, 5), 21, 0.1, 1.0);
        let b = rnd((3, 2, 5), 22, 0.1, 1.0);
        let mix = (&a + &b).mapv(f64::ln_1p);
        let ests = vec![a.mapv(f64::ln_1p), b.mapv(f64::ln_1p)];
        let linear = additive_loss(&ests, &mix, AdditiveDomain::Linear);
        let log = additive_loss(&ests, &mix, AdditiveDomain::Log);
        assert!(linear <= NORM_EPS.sqrt() + 1e-12, "{linear}");
        assert!(log > 1e-2, "log-domain penalty should see the residual: {log}");
    }

    #[test]
    fn penalty_is_exact_for_linear_critics() {
        // score(x) = c * sum(x) has gradient norm c * sqrt(N) everywhere.
        let hw = (4, 4);
        let n = (hw.0 * hw.1) as f64;
        let x = rnd((3, hw.0, hw.1), 10, 0.0, 1.0);

        // c = 2 / sqrt(N): norm 2, one-sided excess 1, penalty 1.
        let steep = CriticModel::scaled_summing(hw, 2.0 / n.sqrt());
        let p = gradient_penalty_at(&steep, &x);
        assert!((p - 1.0).abs() < 1e-9, "{p}");

        // c = 0.5 / sqrt(N): norm 0.5, below the ball, penalty 0.
        let shallow = CriticModel::scaled_summing(hw, 0.5 / n.sqrt());
        let p = gradient_penalty_at(&shallow, &x);
        assert!(p.abs() < 1e-12, "{p}");

        // Norms report what the penalty saw.
        let norms = score_gradient_norms(&steep, &x);
        assert!(norms.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn penalty_matches_finite_differences_on_a_nonlinear_critic() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let critic = tiny_critic((4, 6), &mut rng);
        let at = rnd((3, 4, 6), 12, -0.5, 0.5);
        let got = gradient_penalty_at(&critic, &at);

        // Finite-difference the *norm* per excerpt by probing the score
        // gradient directly, then recompose the penalty.
        let step = 1e-5;
        let mut expect = 0.0;
        for i in 0..3 {
            let mut sq = 0.0;
            for r in 0..4 {
                for c in 0..6 {
                    let mut plus = at.clone();
                    plus[[i, r, c]] += step;
                    let mut minus = at.clone();
                    minus[[i, r, c]] -= step;
                    let d =
                        (critic.score(&plus)[i] - critic.score(&minus)[i]) / (2.0 * step);
                    sq += d * d;
                }
            }
            let excess = (sq.sqrt() - 1.0).max(0.0);
            expect += excess * excess;
        }
        expect /= 3.0;
        assert!(
            (got - expect).abs() < 1e-6,
            "penalty {got} vs finite differences {expect}"
        );
    }

    #[test]
    fn critic_loss_decomposes_into_gap_and_penalty() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let critic = tiny_critic((5, 7), &mut rng);
        let real = rnd((4, 5, 7), 14, 0.0, 1.0);
        let fake = rnd((4, 5, 7), 15, 0.0, 1.0);
        let eps: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let weight = 10.0;
        let loss = critic_loss(&critic, &real, &fake, &eps, weight);
        let gap = -wasserstein_estimate(&critic, &real, &fake);
        let pen = gradient_penalty(&critic, &real, &fake, &eps);
        assert!((loss - (gap + weight * pen)).abs() < 1e-10);
    }

    #[test]
    fn interpolates_lie_between_the_endpoints() {
        let real = rnd((3, 2, 2), 16, 0.0, 1.0);
        let fake = rnd((3, 2, 2), 17, 0.0, 1.0);
        let eps = vec![0.0, 1.0, 0.25];
        let x = interpolates(&real, &fake, &eps);
        // eps = 0 reproduces fake, eps = 1 reproduces real.
        assert_eq!(
            x.index_axis(ndarray::Axis(0), 0),
            fake.index_axis(ndarray::Axis(0), 0)
        );
        assert_eq!(
            x.index_axis(ndarray::Axis(0), 1),
            real.index_axis(ndarray::Axis(0), 1)
        );
        let mid = 0.25 * real[[2, 1, 1]] + 0.75 * fake[[2, 1, 1]];
        assert!((x[[2, 1, 1]] - mid).abs() < 1e-15);
    }

    #[test]
    fn adversarial_loss_is_negated_mean_score() {
        let mut rng = ChaCha20Rng::seed_from_u64(18);
        let c1 = tiny_critic((4, 4), &mut rng);
        let c2 = tiny_critic((4, 4), &mut rng);
        let f1 = rnd((5, 4, 4), 19, 0.0, 1.0);
        let f2 = rnd((5, 4, 4), 20, 0.0, 1.0);
        let got = separator_adversarial_loss(&[&c1, &c2], &[&f1, &f2]);
        let expect = -c1.score(&f1).mean().unwrap() - c2.score(&f2).mean().unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_estimate_for_summing_critic() {
        let critic = CriticModel::summing((2, 3));
        let real = Array3::from_elem((4, 2, 3), 1.0);
        let fake = Array3::from_elem((4, 2, 3), 0.5);
        // D(x) = sum(x): estimate = 6 - 3 = 3.
        let w = wasserstein_estimate(&critic, &real, &fake);
        assert!((w - 3.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradients_flow_into_critic_parameters() {
        // The penalty's parameter gradient must match finite differences —
        // this exercises differentiation through the inner gradient.
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let critic = tiny_critic((4, 5), &mut rng);
        let at = rnd((2, 4, 5), 22, -0.6, 0.6);

        let mut g = Graph::new();
        let vars = bind(&mut g, &critic, true);
        let at_n = g.var(at.clone().into_dyn());
        let p = gradient_penalty_node(&mut g, &critic, &vars, at_n);
        let grads = g.backward(p, &vars);
        let mut flat_grad = Vec::new();
        for gid in grads {
            flat_grad.extend(g.value(gid).iter().copied());
        }

        use crate::separator::{flatten_params, unflatten_params};
        let base = flatten_params(&critic);
        let step = 1e-5;
        let mut probe = critic.clone();
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += step;
            unflatten_params(&mut probe, &plus);
            let up = gradient_penalty_at(&probe, &at);
            let mut minus = base.clone();
            minus[i] -= step;
            unflatten_params(&mut probe, &minus);
            let down = gradient_penalty_at(&probe, &at);
            let fd = (up - down) / (2.0 * step);
            let err = (fd - flat_grad[i]).abs() / flat_grad[i].abs().max(1.0);
            worst = worst.max(err);
        }
        assert!(worst < 1e-5, "worst relative gradient error {worst}");
    }

    #[test]
    fn total_loss_weighs_terms_linearly() {
        let w = LossWeights {
            alpha: 0.01,
            beta: 0.01,
            ..LossWeights::default()
        };
        assert_eq!(total_loss(1.0, 2.0, 3.0, &w), 1.0 + 0.02 + 0.03);

        let scaled = LossWeights {
            alpha: 0.02,
            beta: 0.02,
            ..w
        };
        let a = total_loss(1.0, 2.0, 3.0, &scaled) - 1.0;
        let b = total_loss(1.0, 2.0, 3.0, &w) - 1.0;
        assert!((a - 2.0 * b).abs() < 1e-15);
    }

    #[test]
    fn total_loss_with_zero_weights_is_exactly_the_supervised_term() {
        let w = LossWeights::default();
        let l_s = 0.123456789;
        assert_eq!(total_loss(l_s, f64::NAN, f64::NAN, &w), l_s);
    }
}
