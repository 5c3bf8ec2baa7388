//! The alternating training loop: supervised separator updates, optional
//! adversarial feedback from per-source critics, per-epoch validation with
//! early stopping, and checkpointing that resumes bit-identically.
//!
//! All randomness flows through the single [`ChaCha20Rng`] owned by
//! [`TrainState`], and every draw happens in a fixed order (paired batch,
//! unlabelled batch, one solo batch per active critic in ascending source
//! order, then the interpolation coefficients inside the critic updates).
//! Together with single-threaded arithmetic this makes the loss log a pure
//! function of (config, corpus, seed): two runs agree bitwise, and a run
//! resumed from a checkpoint continues exactly as the uninterrupted run
//! would have.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{self, cut_input_window, cut_target_window};
use crate::critic::CriticModel;
use crate::data::{
    sample_paired_batch, sample_source_batch, sample_unlabelled_batch, stack, Batch, DataCorpus,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::losses::{
    additive_loss_node, adversarial_loss_node, gradient_penalty_node, supervised_loss_node,
    LossWeights,
};
use crate::nn::{bind, collect_grads};
use crate::optim::{Adam, AdamConfig};
use crate::separator::{SeparatorModel, SeparatorSpec};

/// File name of the per-step loss log inside a run directory.
pub const LOSS_LOG_FILE: &str = "loss_log.csv";

/// File name of the marker naming the best checkpoint inside a run
/// directory.
pub const BEST_MARKER_FILE: &str = "best";

/// Checkpoint file name for a given (1-based) epoch.
pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

/// Which loss terms train the separator and which critics exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    /// Supervised only: no critics, `alpha = beta = 0`.
    Baseline,
    /// A critic on the first source; `alpha = beta = 0.01`.
    V,
    /// A critic on every source; `alpha = beta = 0.001`.
    Va,
}

impl TrainMode {
    /// Indices of the sources that get a critic.
    pub fn active_critics(&self, sources: usize) -> Vec<usize> {
        match self {
            TrainMode::Baseline => Vec::new(),
            TrainMode::V => vec![0],
            TrainMode::Va => (0..sources).collect(),
        }
    }

    /// The `(alpha, beta)` pair this mode trains with by default.
    pub fn default_weights(&self) -> (f64, f64) {
        match self {
            TrainMode::Baseline => (0.0, 0.0),
            TrainMode::V => (0.01, 0.01),
            TrainMode::Va => (0.001, 0.001),
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainMode::Baseline => "baseline",
            TrainMode::V => "V",
            TrainMode::Va => "VA",
        })
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(TrainMode::Baseline),
            "V" => Ok(TrainMode::V),
            "VA" => Ok(TrainMode::Va),
            other => Err(Error::Config(format!(
                "unknown training mode {other:?} (expected baseline, V, or VA)"
            ))),
        }
    }
}

/// Everything the loop needs besides the data and the architecture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Adam step size, shared by the separator and the critics.
    pub learning_rate: f64,
    /// First-moment decay of the separator's Adam.
    pub separator_beta1: f64,
    /// Second-moment decay of the separator's Adam.
    pub separator_beta2: f64,
    /// First-moment decay of the critics' Adam.
    pub critic_beta1: f64,
    /// Second-moment decay of the critics' Adam.
    pub critic_beta2: f64,
    /// Adam denominator guard, shared by all optimizers.
    pub adam_eps: f64,
    /// Excerpts per batch, for every batch kind.
    pub batch_size: usize,
    /// Separator updates per epoch.
    pub steps_per_epoch: usize,
    /// Hard cap on the number of epochs.
    pub max_epochs: usize,
    /// Consecutive epochs without a validation improvement before stopping.
    pub patience_epochs: usize,
    /// Critic updates per separator update, for each active critic.
    pub n_disc: usize,
    pub weights: LossWeights,
    pub seed: u64,
}

impl TrainConfig {
    /// The default schedule for a mode: the published hyperparameters with
    /// the mode's `(alpha, beta)` filled in.
    pub fn for_mode(mode: TrainMode, seed: u64) -> Self {
        let (alpha, beta) = mode.default_weights();
        TrainConfig {
            mode,
            learning_rate: 5e-5,
            separator_beta1: 0.9,
            separator_beta2: 0.999,
            critic_beta1: 0.5,
            critic_beta2: 0.9,
            adam_eps: 1e-8,
            batch_size: 64,
            steps_per_epoch: 1000,
            max_epochs: 100,
            patience_epochs: 6,
            n_disc: 5,
            weights: LossWeights {
                alpha,
                beta,
                ..LossWeights::default()
            },
            seed,
        }
    }

    /// Rejects configurations the loop cannot honour.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.steps_per_epoch == 0 {
            return bad("steps_per_epoch must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.patience_epochs == 0 {
            return bad("patience_epochs must be at least 1".into());
        }
        for (name, v) in [("alpha", self.weights.alpha), ("beta", self.weights.beta)] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !self.weights.penalty_weight.is_finite() || self.weights.penalty_weight < 0.0 {
            return bad(format!(
                "penalty_weight must be finite and >= 0, got {}",
                self.weights.penalty_weight
            ));
        }
        if self.mode == TrainMode::Baseline
            && (self.weights.alpha != 0.0 || self.weights.beta != 0.0)
        {
            return bad(format!(
                "baseline mode trains without critics; alpha and beta must be 0, got {} and {}",
                self.weights.alpha, self.weights.beta
            ));
        }
        Ok(())
    }

    fn separator_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.separator_beta1,
            beta2: self.separator_beta2,
            eps: self.adam_eps,
        }
    }

    fn critic_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.critic_beta1,
            beta2: self.critic_beta2,
            eps: self.adam_eps,
        }
    }
}

/// The complete mutable state of a run. Serializing and reloading this
/// struct resumes training bit-identically, so it carries the models, the
/// optimizer moments, the early-stopping bookkeeping, and the rng.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainState {
    pub separator: SeparatorModel,
    /// One slot per source; `None` where the mode trains no critic.
    pub critics: Vec<Option<CriticModel>>,
    pub separator_opt: Adam,
    pub critic_opts: Vec<Option<Adam>>,
    /// Completed epochs (0 before training).
    pub epoch: usize,
    /// Completed separator updates across all epochs.
    pub step: usize,
    /// Lowest validation loss recorded so far.
    pub best_validation: f64,
    /// Epochs since `best_validation` last improved.
    pub epochs_since_improvement: usize,
    pub rng: ChaCha20Rng,
}

impl TrainState {
    /// Builds the initial state: a fresh separator, one critic per active
    /// source, and their optimizers, all drawn from the config seed. The
    /// separator consumes the rng first, then the critics in ascending
    /// source order.
    pub fn new(cfg: &TrainConfig, spec: SeparatorSpec, critic_base_filters: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let separator = SeparatorModel::new(spec, &mut rng)?;
        let geom = separator.plan.geometry();
        let active = cfg.mode.active_critics(spec.sources);
        let mut critics: Vec<Option<CriticModel>> = vec![None; spec.sources];
        for &k in &active {
            critics[k] = Some(CriticModel::new(
                (geom.out_frames, geom.out_bins),
                critic_base_filters,
                &mut rng,
            ));
        }
        let separator_opt = Adam::new(cfg.separator_adam(), &separator);
        let critic_opts = critics
            .iter()
            .map(|c| c.as_ref().map(|c| Adam::new(cfg.critic_adam(), c)))
            .collect();
        Ok(TrainState {
            separator,
            critics,
            separator_opt,
            critic_opts,
            epoch: 0,
            step: 0,
            best_validation: f64::INFINITY,
            epochs_since_improvement: 0,
            rng,
        })
    }

    /// Indices of the sources that actually carry a critic.
    pub fn active_critics(&self) -> Vec<usize> {
        self.critics
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.as_ref().map(|_| k))
            .collect()
    }
}

/// Writes a checkpoint. The file is a bincode dump of the full state.
pub fn save_state(path: &Path, state: &TrainState) -> Result<()> {
    let bytes = bincode::serialize(state)
        .map_err(|e| Error::Checkpoint(format!("cannot encode checkpoint: {e}")))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint written by [`save_state`].
pub fn load_state(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    bincode::deserialize(&bytes)
        .map_err(|e| Error::Checkpoint(format!("cannot decode {}: {e}", path.display())))
}

/// The separator loss values of one update, measured at the parameters the
/// update started from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub supervised: f64,
    pub adversarial: f64,
    pub additive: f64,
    pub total: f64,
}

/// Monitoring values from one critic's updates: the loss that drove the
/// last update and the distance estimate at that moment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticStats {
    pub wasserstein: f64,
    pub loss: f64,
}

/// One row of the loss log: a separator update plus the critic updates that
/// followed it.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    /// 1-based global separator-update count.
    pub step: usize,
    /// 1-based epoch the update belongs to.
    pub epoch: usize,
    pub losses: StepLosses,
    /// Per source; `None` where no critic exists.
    pub critics: Vec<Option<CriticStats>>,
}

impl LogRow {
    /// CSV header for a `sources`-way log:
    /// `step,epoch,L_s,L_u,L_add,L_total,W_1..W_K,critic_loss_1..critic_loss_K`.
    pub fn csv_header(sources: usize) -> String {
        let mut h = String::from("step,epoch,L_s,L_u,L_add,L_total");
        for k in 1..=sources {
            h.push_str(&format!(",W_{k}"));
        }
        for k in 1..=sources {
            h.push_str(&format!(",critic_loss_{k}"));
        }
        h
    }

    /// One CSV row. Floats print in shortest round-trip form, so equal rows
    /// mean bitwise-equal values; sources without a critic print empty
    /// fields.
    pub fn csv_row(&self) -> String {
        let mut r = format!(
            "{},{},{},{},{},{}",
            self.step,
            self.epoch,
            self.losses.supervised,
            self.losses.adversarial,
            self.losses.additive,
            self.losses.total
        );
        for c in &self.critics {
            match c {
                Some(c) => r.push_str(&format!(",{}", c.wasserstein)),
                None => r.push(','),
            }
        }
        for c in &self.critics {
            match c {
                Some(c) => r.push_str(&format!(",{}", c.loss)),
                None => r.push(','),
            }
        }
        r
    }
}

fn ensure_finite(context: &str, step: usize, values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !v.is_finite() {
            let listing = values
                .iter()
                .map(|(n, v)| format!("{n}={v}"))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::Train(format!(
                "{context} produced a non-finite {name} at step {step}: {listing}"
            )));
        }
    }
    Ok(())
}

/// One Adam update of the separator on the combined objective
/// `L_s + alpha * L_u + beta * L_add`.
///
/// The supervised term compares the paired batch's estimates to its
/// targets. The adversarial and additivity terms run the separator on the
/// unlabelled batch; critics enter the graph as constants, so they are
/// read, never changed. Terms whose weight is zero are skipped entirely
/// (and reported as 0), which makes the zero-weight step literally a
/// supervised-only step. Loss values are measured before the update.
pub fn separator_step(
    state: &mut TrainState,
    cfg: &TrainConfig,
    paired: &Batch,
    unlabelled: Option<&Batch>,
) -> Result<StepLosses> {
    let w = &cfg.weights;
    let active = state.active_critics();
    let need_unlabelled =
        (w.alpha != 0.0 && !active.is_empty()) || w.beta != 0.0;
    let mut g = Graph::new();
    let vars = bind(&mut g, &state.separator, true);

    let x = g.constant(paired.inputs.clone().into_dyn());
    let ests = state.separator.forward_node(&mut g, &vars, x);
    let tgts: Vec<_> = paired
        .targets
        .iter()
        .map(|t| g.constant(t.clone().into_dyn()))
        .collect();
    let l_s = supervised_loss_node(&mut g, &ests, &tgts, w.supervised_norm);

    let mut loss = l_s;
    let mut l_u_val = 0.0;
    let mut l_add_val = 0.0;
    if need_unlabelled {
        let u = unlabelled.ok_or_else(|| {
            Error::Train("this mode needs an unlabelled batch for every separator step".into())
        })?;
        let xu = g.constant(u.inputs.clone().into_dyn());
        let fakes = state.separator.forward_node(&mut g, &vars, xu);

        if w.alpha != 0.0 && !active.is_empty() {
            let mut l_u: Option<crate::graph::NodeId> = None;
            for &k in &active {
                let critic = state.critics[k].as_ref().unwrap();
                let cvars = bind(&mut g, critic, false);
                let term = adversarial_loss_node(&mut g, critic, &cvars, fakes[k]);
                l_u = Some(match l_u {
                    Some(acc) => g.add(acc, term),
                    None => term,
                });
            }
            let l_u = l_u.unwrap();
            l_u_val = g.scalar(l_u);
            let weighted = g.scale(l_u, w.alpha);
            loss = g.add(loss, weighted);
        }

        if w.beta != 0.0 {
            let geom = state.separator.plan.geometry();
            let m0 = geom.time_margin;
            let mix = u
                .inputs
                .slice(s![.., m0..m0 + geom.out_frames, ..geom.out_bins])
                .to_owned();
            let mix_n = g.constant(mix.into_dyn());
            let l_add = additive_loss_node(&mut g, &fakes, mix_n, w.additive_domain);
            l_add_val = g.scalar(l_add);
            let weighted = g.scale(l_add, w.beta);
            loss = g.add(loss, weighted);
        }
    }

    let losses = StepLosses {
        supervised: g.scalar(l_s),
        adversarial: l_u_val,
        additive: l_add_val,
        total: g.scalar(loss),
    };
    ensure_finite(
        "separator step",
        state.step + 1,
        &[
            ("L_s", losses.supervised),
            ("L_u", losses.adversarial),
            ("L_add", losses.additive),
            ("L_total", losses.total),
        ],
    )?;

    let grad_ids = g.backward(loss, &vars);
    let grads = collect_grads(&g, &grad_ids);
    state.separator_opt.step(&mut state.separator, &grads);
    Ok(losses)
}

/// `n_disc` Adam updates for every active critic.
///
/// All critics score the same generated batch: the separator's output on
/// `unlabelled`, computed once outside any graph, so no gradient reaches
/// the separator. `reals[k]` supplies the genuine solo excerpts for source
/// `k` and must be present for every active critic. Each update draws fresh
/// per-excerpt interpolation coefficients from the state rng (ascending
/// source order, then update order). Returns per-source monitoring stats
/// from the last update; with no active critics or `n_disc == 0` the state
/// is untouched.
pub fn critic_steps(
    state: &mut TrainState,
    cfg: &TrainConfig,
    unlabelled: &Batch,
    reals: &[Option<Batch>],
) -> Result<Vec<Option<CriticStats>>> {
    let sources = state.critics.len();
    let mut stats: Vec<Option<CriticStats>> = vec![None; sources];
    let active = state.active_critics();
    if active.is_empty() || cfg.n_disc == 0 {
        return Ok(stats);
    }
    if reals.len() != sources {
        return Err(Error::Train(format!(
            "expected one (possibly empty) solo batch slot per source: got {} for {sources}",
            reals.len()
        )));
    }

    let fakes = state.separator.forward(&unlabelled.inputs);
    for &k in &active {
        let real = reals[k].as_ref().ok_or_else(|| {
            Error::Train(format!("critic {k} is active but got no solo batch"))
        })?;
        let fake = &fakes[k];
        if real.inputs.shape() != fake.shape() {
            return Err(Error::Train(format!(
                "critic {k}: solo batch shape {:?} does not match generated {:?}",
                real.inputs.shape(),
                fake.shape()
            )));
        }
        for i in 0..cfg.n_disc {
            let eps: Vec<f64> = (0..real.inputs.shape()[0])
                .map(|_| state.rng.random_range(0.0..1.0))
                .collect();
            let at = crate::losses::interpolates(&real.inputs, fake, &eps);

            let critic = state.critics[k].as_mut().unwrap();
            let mut g = Graph::new();
            let cvars = bind(&mut g, critic, true);
            let xr = g.constant(real.inputs.clone().into_dyn());
            let xf = g.constant(fake.clone().into_dyn());
            let xa = g.var(at.into_dyn());
            let sr = critic.score_node(&mut g, &cvars, xr);
            let sf = critic.score_node(&mut g, &cvars, xf);
            let m_real = g.mean_all(sr);
            let m_fake = g.mean_all(sf);
            let gap = g.sub(m_fake, m_real);
            let pen = gradient_penalty_node(&mut g, critic, &cvars, xa);
            let wpen = g.scale(pen, cfg.weights.penalty_weight);
            let loss = g.add(gap, wpen);

            let loss_val = g.scalar(loss);
            let w_val = g.scalar(m_real) - g.scalar(m_fake);
            ensure_finite(
                &format!("critic {k} update {}", i + 1),
                state.step + 1,
                &[("critic_loss", loss_val), ("W", w_val)],
            )?;
            if i + 1 == cfg.n_disc {
                stats[k] = Some(CriticStats {
                    wasserstein: w_val,
                    loss: loss_val,
                });
            }

            let grad_ids = g.backward(loss, &cvars);
            let grads = collect_grads(&g, &grad_ids);
            state.critic_opts[k]
                .as_mut()
                .unwrap()
                .step(critic, &grads);
        }
    }
    Ok(stats)
}

/// Supervised loss over a fixed sweep of the validation corpus.
///
/// Every paired validation track is cut into consecutive non-overlapping
/// output windows (a partial window at the end is dropped), each with its
/// context-padded input window. No randomness is involved, so the value is
/// a pure function of the parameters and the corpus: calling twice on the
/// same state gives the same number.
pub fn validation_loss(
    state: &TrainState,
    cfg: &TrainConfig,
    validation: &DataCorpus,
) -> Result<f64> {
    let geom = state.separator.plan.geometry();
    let mut inputs: Vec<Array2<f64>> = Vec::new();
    let mut targets: Vec<Vec<Array2<f64>>> = vec![Vec::new(); validation.sources];
    for (i, track) in validation.paired.iter().enumerate() {
        let frames = track.mixture.nrows();
        if frames < geom.out_frames {
            return Err(Error::Train(format!(
                "validation track {i} has {frames} frames; one output window needs {}",
                geom.out_frames
            )));
        }
        for w in 0..frames / geom.out_frames {
            let start = (w * geom.out_frames) as isize - geom.time_margin as isize;
            inputs.push(audio::log_normalize(&cut_input_window(
                &track.mixture,
                &geom,
                start,
            ))?);
            for (k, src) in track.sources.iter().enumerate() {
                targets[k].push(audio::log_normalize(&cut_target_window(src, &geom, start))?);
            }
        }
    }
    if inputs.is_empty() {
        return Err(Error::Train("validation corpus has no paired tracks".into()));
    }

    let mut weighted = 0.0;
    let mut count = 0usize;
    let mut at = 0usize;
    while at < inputs.len() {
        let end = (at + cfg.batch_size).min(inputs.len());
        let x = stack(&inputs[at..end]);
        let ests = state.separator.forward(&x);
        let tgts: Vec<Array3<f64>> = targets.iter().map(|t| stack(&t[at..end])).collect();
        let l = crate::losses::supervised_loss(&ests, &tgts, cfg.weights.supervised_norm);
        weighted += l * (end - at) as f64;
        count += end - at;
        at = end;
    }
    Ok(weighted / count as f64)
}

/// A finished (or stopped) run: the state with the lowest recorded
/// validation loss, the state after the last epoch, and the full per-step
/// log of this call.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: TrainState,
    pub last: TrainState,
    pub log: Vec<LogRow>,
}

struct LogSink {
    rows: Vec<LogRow>,
    file: Option<BufWriter<File>>,
}

impl LogSink {
    fn open(run_dir: Option<&Path>, sources: usize) -> Result<Self> {
        let file = match run_dir {
            None => None,
            Some(dir) => {
                let path = dir.join(LOSS_LOG_FILE);
                let fresh = !path.exists()
                    || std::fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
                let mut f = BufWriter::new(
                    OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&path)
                        .map_err(|e| Error::io(&path, e))?,
                );
                if fresh {
                    writeln!(f, "{}", LogRow::csv_header(sources))
                        .map_err(|e| Error::io(&path, e))?;
                }
                Some(f)
            }
        };
        Ok(LogSink {
            rows: Vec::new(),
            file,
        })
    }

    fn push(&mut self, row: LogRow) -> Result<()> {
        if let Some(f) = &mut self.file {
            writeln!(f, "{}", row.csv_row())
                .and_then(|_| f.flush())
                .map_err(|e| Error::Train(format!("cannot write loss log: {e}")))?;
        }
        self.rows.push(row);
        Ok(())
    }
}

/// Trains from scratch: builds the initial state for `spec` under `cfg`
/// and hands off to [`resume_training`].
pub fn run_training(
    cfg: &TrainConfig,
    spec: SeparatorSpec,
    critic_base_filters: usize,
    corpus: &DataCorpus,
    validation: &DataCorpus,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let state = TrainState::new(cfg, spec, critic_base_filters)?;
    resume_training(state, cfg, corpus, validation, run_dir)
}

/// Runs epochs of `steps_per_epoch` separator updates, each followed by the
/// critic updates the mode calls for, then a validation pass. Stops once
/// validation has not improved for `patience_epochs` consecutive epochs, or
/// at `max_epochs`.
///
/// With a run directory, every epoch writes a checkpoint, improvements
/// update the [`BEST_MARKER_FILE`], and the loss log streams to
/// [`LOSS_LOG_FILE`] (appending, so a resumed run continues the same log;
/// rows hit the disk as they happen and survive an abort).
pub fn resume_training(
    mut state: TrainState,
    cfg: &TrainConfig,
    corpus: &DataCorpus,
    validation: &DataCorpus,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec_sources = state.separator.spec.sources;
    for (name, c) in [("training", corpus), ("validation", validation)] {
        if c.sources != spec_sources {
            return Err(Error::Train(format!(
                "{name} corpus has {} sources but the separator emits {spec_sources}",
                c.sources
            )));
        }
    }
    if let Some(dir) = run_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let geom = state.separator.plan.geometry();
    let active = state.active_critics();
    let semi = (cfg.weights.alpha != 0.0 && !active.is_empty()) || cfg.weights.beta != 0.0;
    let mut sink = LogSink::open(run_dir, spec_sources)?;
    let mut best: Option<TrainState> = None;

    while state.epoch < cfg.max_epochs {
        let epoch = state.epoch + 1;
        for _ in 0..cfg.steps_per_epoch {
            let paired = sample_paired_batch(corpus, &geom, cfg.batch_size, &mut state.rng)?;
            let unlabelled = if semi {
                Some(sample_unlabelled_batch(
                    corpus,
                    &geom,
                    cfg.batch_size,
                    &mut state.rng,
                )?)
            } else {
                None
            };
            let losses = separator_step(&mut state, cfg, &paired, unlabelled.as_ref())?;

            let critics = if !active.is_empty() && cfg.n_disc > 0 {
                let drawn;
                let shared = match &unlabelled {
                    Some(u) => u,
                    None => {
                        drawn =
                            sample_unlabelled_batch(corpus, &geom, cfg.batch_size, &mut state.rng)?;
                        &drawn
                    }
                };
                let mut reals: Vec<Option<Batch>> = vec![None; spec_sources];
                for &k in &active {
                    reals[k] = Some(sample_source_batch(
                        corpus,
                        k,
                        &geom,
                        cfg.batch_size,
                        &mut state.rng,
                    )?);
                }
                critic_steps(&mut state, cfg, shared, &reals)?
            } else {
                vec![None; spec_sources]
            };

            state.step += 1;
            sink.push(LogRow {
                step: state.step,
                epoch,
                losses,
                critics,
            })?;
        }

        let val = validation_loss(&state, cfg, validation)?;
        state.epoch = epoch;
        let improved = val < state.best_validation;
        if improved {
            state.best_validation = val;
            state.epochs_since_improvement = 0;
            best = Some(state.clone());
        } else {
            state.epochs_since_improvement += 1;
        }
        if let Some(dir) = run_dir {
            save_state(&dir.join(checkpoint_file_name(epoch)), &state)?;
            if improved {
                let marker = dir.join(BEST_MARKER_FILE);
                std::fs::write(&marker, format!("{}\n", checkpoint_file_name(epoch)))
                    .map_err(|e| Error::io(&marker, e))?;
            }
        }
        if state.epochs_since_improvement >= cfg.patience_epochs {
            break;
        }
    }

    let best = match best {
        Some(b) => b,
        None => match run_dir.map(best_checkpoint_path) {
            Some(Ok(path)) => load_state(&path)?,
            _ => state.clone(),
        },
    };
    Ok(TrainOutcome {
        best,
        last: state,
        log: sink.rows,
    })
}

/// Resolves the checkpoint the best marker points at.
pub fn best_checkpoint_path(run_dir: &Path) -> Result<PathBuf> {
    let marker = run_dir.join(BEST_MARKER_FILE);
    let name = std::fs::read_to_string(&marker).map_err(|e| Error::io(&marker, e))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(Error::Checkpoint(format!(
            "best marker {} is empty",
            marker.display()
        )));
    }
    Ok(run_dir.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PairedTrack;
    use crate::losses::{total_loss, SupervisedNorm};
    use crate::nn::param_hash;

    fn tiny_spec() -> SeparatorSpec {
        SeparatorSpec {
            sources: 2,
            levels: 1,
            base_filters: 2,
            input_frames: 10,
            fft_bins: 17,
        }
    }

    fn tiny_cfg(mode: TrainMode) -> TrainConfig {
        let mut cfg = TrainConfig::for_mode(mode, 7);
        cfg.learning_rate = 1e-3;
        cfg.batch_size = 3;
        cfg.steps_per_epoch = 2;
        cfg.max_epochs = 2;
        cfg.patience_epochs = 2;
        cfg.n_disc = 2;
        cfg
    }

    /// A corpus of random positive grids shaped for [`tiny_spec`].
    fn tiny_corpus(seed: u64, tracks: usize) -> DataCorpus {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut grid = |frames: usize| {
            let mut g = Array2::<f64>::zeros((frames, 17));
            g.mapv_inplace(|_| rng.random_range(0.0..1.0));
            g
        };
        let mut paired = Vec::new();
        let mut unlabelled = Vec::new();
        let mut solo: Vec<Vec<Array2<f64>>> = vec![Vec::new(), Vec::new()];
        for _ in 0..tracks {
            let a = grid(40);
            let b = grid(40);
            paired.push(PairedTrack {
                mixture: &a + &b,
                sources: vec![a, b],
            });
            unlabelled.push(grid(40));
            solo[0].push(grid(40));
            solo[1].push(grid(40));
        }
        DataCorpus {
            sources: 2,
            paired,
            unlabelled,
            solo,
        }
    }

    fn paired_batch(state: &mut TrainState, corpus: &DataCorpus, n: usize) -> Batch {
        let geom = state.separator.plan.geometry();
        sample_paired_batch(corpus, &geom, n, &mut state.rng).unwrap()
    }

    #[test]
    fn baseline_state_never_builds_critics() {
        let cfg = tiny_cfg(TrainMode::Baseline);
        let state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        assert!(state.critics.iter().all(|c| c.is_none()));
        assert!(state.critic_opts.iter().all(|c| c.is_none()));
        assert!(state.active_critics().is_empty());

        let v = TrainState::new(&tiny_cfg(TrainMode::V), tiny_spec(), 2).unwrap();
        assert_eq!(v.active_critics(), vec![0]);
        let va = TrainState::new(&tiny_cfg(TrainMode::Va), tiny_spec(), 2).unwrap();
        assert_eq!(va.active_critics(), vec![0, 1]);
    }

    #[test]
    fn zero_weight_step_equals_a_plain_supervised_adam_step() {
        let cfg = tiny_cfg(TrainMode::Baseline);
        let corpus = tiny_corpus(11, 2);
        let mut state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let batch = paired_batch(&mut state, &corpus, 3);

        // Reference: the same update written out by hand, with no
        // training-loop machinery in sight.
        let mut ref_model = state.separator.clone();
        let mut ref_opt = Adam::new(cfg.separator_adam(), &ref_model);
        let mut g = Graph::new();
        let vars = bind(&mut g, &ref_model, true);
        let x = g.constant(batch.inputs.clone().into_dyn());
        let ests = ref_model.forward_node(&mut g, &vars, x);
        let tgts: Vec<_> = batch
            .targets
            .iter()
            .map(|t| g.constant(t.clone().into_dyn()))
            .collect();
        let l_s = supervised_loss_node(&mut g, &ests, &tgts, SupervisedNorm::Mse);
        let grad_ids = g.backward(l_s, &vars);
        let grads = collect_grads(&g, &grad_ids);
        ref_opt.step(&mut ref_model, &grads);

        let losses = separator_step(&mut state, &cfg, &batch, None).unwrap();
        assert_eq!(losses.total, losses.supervised);
        assert_eq!(losses.adversarial, 0.0);
        assert_eq!(losses.additive, 0.0);
        assert_eq!(param_hash(&state.separator), param_hash(&ref_model));
    }

    #[test]
    fn zero_learning_rate_reports_losses_but_changes_nothing() {
        let mut cfg = tiny_cfg(TrainMode::Baseline);
        cfg.learning_rate = 0.0;
        let corpus = tiny_corpus(12, 2);
        let mut state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let batch = paired_batch(&mut state, &corpus, 3);
        let before = param_hash(&state.separator);
        let losses = separator_step(&mut state, &cfg, &batch, None).unwrap();
        assert!(losses.supervised > 0.0);
        assert_eq!(param_hash(&state.separator), before);
    }

    #[test]
    fn repeated_steps_on_one_batch_overfit_it() {
        let mut cfg = tiny_cfg(TrainMode::Baseline);
        cfg.learning_rate = 2e-3;
        let corpus = tiny_corpus(13, 2);
        let mut state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let batch = paired_batch(&mut state, &corpus, 4);
        let first = separator_step(&mut state, &cfg, &batch, None).unwrap();
        let mut last = first;
        for _ in 0..199 {
            last = separator_step(&mut state, &cfg, &batch, None).unwrap();
        }
        assert!(
            last.supervised < 0.1 * first.supervised,
            "supervised loss went {} -> {}",
            first.supervised,
            last.supervised
        );
    }

    #[test]
    fn semi_modes_require_an_unlabelled_batch() {
        let cfg = tiny_cfg(TrainMode::V);
        let corpus = tiny_corpus(14, 2);
        let mut state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let batch = paired_batch(&mut state, &corpus, 3);
        let err = separator_step(&mut state, &cfg, &batch, None).unwrap_err();
        assert!(err.to_string().contains("unlabelled"));
    }

    #[test]
    fn separator_step_reports_all_three_terms_in_semi_mode() {
        let cfg = tiny_cfg(TrainMode::Va);
        let corpus = tiny_corpus(15, 2);
        let mut state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let geom = state.separator.plan.geometry();
        let paired = paired_batch(&mut state, &corpus, 3);
        let unlabelled = sample_unlabelled_batch(&corpus, &geom, 3, &mut state.rng).unwrap();

        let critic_hashes: Vec<u64> = state
            .critics
            .iter()
            .flatten()
            .map(|c| param_hash(c))
            .collect();
        let losses = separator_step(&mut state, &cfg, &paired, Some(&unlabelled)).unwrap();
        assert!(losses.supervised > 0.0);
        assert!(losses.additive > 0.0);
        assert!(losses.adversarial != 0.0);
        let expected = total_loss(
            losses.supervised,
            losses.adversarial,
            losses.additive,
            &cfg.weights,
        );
        assert!((losses.total - expected).abs() < 1e-12);

        let after: Vec<u64> = state
            .critics
            .iter()
            .flatten()
            .map(|c| param_hash(c))
            .collect();
        assert_eq!(critic_hashes, after, "critics moved during a separator step");
    }

    #[test]
    fn critic_steps_leave_the_separator_alone_and_vice_versa() {
        let cfg = tiny_cfg(TrainMode::Va);
        let corpus = tiny_corpus(16, 2);
        let mut state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let geom = state.separator.plan.geometry();
        let unlabelled = sample_unlabelled_batch(&corpus, &geom, 3, &mut state.rng).unwrap();
        let reals: Vec<Option<Batch>> = (0..2)
            .map(|k| Some(sample_source_batch(&corpus, k, &geom, 3, &mut state.rng).unwrap()))
            .collect();

        let sep_before = param_hash(&state.separator);
        let critic_before: Vec<u64> = state
            .critics
            .iter()
            .flatten()
            .map(|c| param_hash(c))
            .collect();
        let stats = critic_steps(&mut state, &cfg, &unlabelled, &reals).unwrap();
        assert_eq!(param_hash(&state.separator), sep_before);
        let critic_after: Vec<u64> = state
            .critics
            .iter()
            .flatten()
            .map(|c| param_hash(c))
            .collect();
        assert_ne!(critic_before, critic_after, "critic updates did nothing");
        assert!(stats.iter().all(|s| s.is_some()));
        assert!(stats.iter().flatten().all(|s| s.loss.is_finite()));
    }

    #[test]
    fn no_active_critics_or_zero_n_disc_is_a_no_op() {
        let corpus = tiny_corpus(17, 2);

        let cfg = tiny_cfg(TrainMode::Baseline);
        let mut state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let geom = state.separator.plan.geometry();
        let unlabelled = sample_unlabelled_batch(&corpus, &geom, 3, &mut state.rng).unwrap();
        let rng_before = state.rng.clone();
        let stats = critic_steps(&mut state, &cfg, &unlabelled, &[None, None]).unwrap();
        assert!(stats.iter().all(|s| s.is_none()));
        assert_eq!(state.rng, rng_before, "no-op consumed randomness");

        let mut cfg = tiny_cfg(TrainMode::Va);
        cfg.n_disc = 0;
        let mut state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let before: Vec<u64> = state
            .critics
            .iter()
            .flatten()
            .map(|c| param_hash(c))
            .collect();
        let stats = critic_steps(&mut state, &cfg, &unlabelled, &[None, None]).unwrap();
        assert!(stats.iter().all(|s| s.is_none()));
        let after: Vec<u64> = state
            .critics
            .iter()
            .flatten()
            .map(|c| param_hash(c))
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn critic_training_learns_to_tell_the_pools_apart() {
        let mut cfg = tiny_cfg(TrainMode::V);
        cfg.learning_rate = 1e-3;
        cfg.n_disc = 1;
        let mut state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let geom = state.separator.plan.geometry();

        // Frozen separator: only the critic trains. Real excerpts sit in a
        // range the separator's random initialization does not produce, so
        // the distance estimate should climb as the critic learns the gap.
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        fn grid(rng: &mut ChaCha20Rng, shape: (usize, usize, usize), lo: f64, hi: f64) -> Array3<f64> {
            let mut x = Array3::<f64>::zeros(shape);
            x.mapv_inplace(|_| rng.random_range(lo..hi));
            x
        }
        let unlabelled = Batch {
            inputs: grid(&mut rng, (4, geom.input_frames, geom.input_bins), 0.0, 1.0),
            targets: Vec::new(),
        };

        let mut curve = Vec::new();
        for _ in 0..400 {
            let real = Batch {
                inputs: grid(&mut rng, (4, geom.out_frames, geom.out_bins), 2.0, 3.0),
                targets: Vec::new(),
            };
            let stats = critic_steps(&mut state, &cfg, &unlabelled, &[Some(real), None]).unwrap();
            curve.push(stats[0].unwrap().wasserstein);
        }

        // Smooth with a moving average, then check the trend: Spearman rank
        // correlation between time and the smoothed estimate.
        let window = 20;
        let smooth: Vec<f64> = (0..curve.len() - window)
            .map(|i| curve[i..i + window].iter().sum::<f64>() / window as f64)
            .collect();
        let rho = spearman(&smooth);
        assert!(rho > 0.5, "distance estimate trend too weak: rho = {rho}");
        assert!(
            smooth[smooth.len() - 1] > smooth[0],
            "distance estimate never rose: {} -> {}",
            smooth[0],
            smooth[smooth.len() - 1]
        );
    }

    /// Spearman rank correlation of a series against time.
    fn spearman(y: &[f64]) -> f64 {
        let n = y.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap());
        let mut rank = vec![0.0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r as f64;
        }
        let mean = (n as f64 - 1.0) / 2.0;
        let mut num = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for (i, &r) in rank.iter().enumerate() {
            let a = i as f64 - mean;
            let b = r - mean;
            num += a * b;
            dx += a * a;
            dy += b * b;
        }
        num / (dx * dy).sqrt()
    }

    #[test]
    fn validation_loss_is_deterministic_and_zero_for_a_perfect_fit() {
        let cfg = tiny_cfg(TrainMode::Baseline);
        let corpus = tiny_corpus(18, 2);
        let state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let a = validation_loss(&state, &cfg, &corpus).unwrap();
        let b = validation_loss(&state, &cfg, &corpus).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);

        // Silent targets and a zeroed separator agree exactly: both sides
        // of the supervised term are all zeros.
        let mut silent = tiny_corpus(18, 1);
        for t in &mut silent.paired {
            t.mixture.fill(0.0);
            for s in &mut t.sources {
                s.fill(0.0);
            }
        }
        let mut zeroed = state.clone();
        crate::separator::zero_params(&mut zeroed.separator);
        assert_eq!(validation_loss(&zeroed, &cfg, &silent).unwrap(), 0.0);
    }

    #[test]
    fn training_improves_validation_and_returns_the_best_epoch() {
        let mut cfg = tiny_cfg(TrainMode::Baseline);
        cfg.learning_rate = 2e-3;
        cfg.steps_per_epoch = 25;
        cfg.max_epochs = 4;
        cfg.patience_epochs = 4;
        let corpus = tiny_corpus(19, 3);
        let validation = tiny_corpus(20, 2);

        let init = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let init_val = validation_loss(&init, &cfg, &validation).unwrap();
        let out = run_training(&cfg, tiny_spec(), 2, &corpus, &validation, None).unwrap();
        assert_eq!(out.log.len(), 4 * 25);
        let best_val = validation_loss(&out.best, &cfg, &validation).unwrap();
        assert!(
            best_val < init_val,
            "validation went {init_val} -> {best_val}"
        );
        assert_eq!(best_val, out.best.best_validation);
        assert!(out.best.best_validation <= out.last.best_validation);
    }

    #[test]
    fn stalled_validation_stops_after_patience_epochs() {
        let mut cfg = tiny_cfg(TrainMode::Baseline);
        cfg.learning_rate = 0.0;
        cfg.steps_per_epoch = 2;
        cfg.max_epochs = 50;
        cfg.patience_epochs = 3;
        let corpus = tiny_corpus(21, 2);
        let out = run_training(&cfg, tiny_spec(), 2, &corpus, &corpus, None).unwrap();
        // Epoch 1 improves on the initial +inf; nothing improves after it.
        assert_eq!(out.last.epoch, 1 + 3);
        assert_eq!(out.log.len(), (1 + 3) * 2);
        assert_eq!(out.best.epoch, 1);
    }

    #[test]
    fn max_epochs_one_runs_exactly_steps_per_epoch_updates() {
        let mut cfg = tiny_cfg(TrainMode::Baseline);
        cfg.steps_per_epoch = 5;
        cfg.max_epochs = 1;
        let corpus = tiny_corpus(22, 2);
        let out = run_training(&cfg, tiny_spec(), 2, &corpus, &corpus, None).unwrap();
        assert_eq!(out.log.len(), 5);
        assert_eq!(out.last.step, 5);
        assert_eq!(out.last.epoch, 1);
        assert!((1usize..=5).zip(&out.log).all(|(i, r)| r.step == i && r.epoch == 1));
    }

    #[test]
    fn identical_configs_produce_identical_runs() {
        let cfg = tiny_cfg(TrainMode::Va);
        let corpus = tiny_corpus(23, 2);
        let a = run_training(&cfg, tiny_spec(), 2, &corpus, &corpus, None).unwrap();
        let b = run_training(&cfg, tiny_spec(), 2, &corpus, &corpus, None).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(param_hash(&a.last.separator), param_hash(&b.last.separator));

        let mut other = cfg;
        other.seed = 8;
        let c = run_training(&other, tiny_spec(), 2, &corpus, &corpus, None).unwrap();
        assert_ne!(a.log, c.log, "different seeds produced the same run");
    }

    #[test]
    fn resuming_a_checkpoint_continues_the_run_bit_identically() {
        let mut cfg = tiny_cfg(TrainMode::Va);
        cfg.max_epochs = 3;
        cfg.patience_epochs = 3;
        let corpus = tiny_corpus(24, 2);
        let dir = tempfile::tempdir().unwrap();

        let full = run_training(&cfg, tiny_spec(), 2, &corpus, &corpus, None).unwrap();

        let mut head_cfg = cfg;
        head_cfg.max_epochs = 2;
        let head = run_training(
            &head_cfg,
            tiny_spec(),
            2,
            &corpus,
            &corpus,
            Some(dir.path()),
        )
        .unwrap();
        let reloaded = load_state(&dir.path().join(checkpoint_file_name(2))).unwrap();
        assert_eq!(
            param_hash(&reloaded.separator),
            param_hash(&head.last.separator)
        );
        let tail = resume_training(reloaded, &cfg, &corpus, &corpus, Some(dir.path())).unwrap();

        let mut stitched = head.log.clone();
        stitched.extend(tail.log.clone());
        assert_eq!(stitched, full.log);
        assert_eq!(
            param_hash(&full.last.separator),
            param_hash(&tail.last.separator)
        );
        for (c_full, c_tail) in full.last.critics.iter().zip(&tail.last.critics) {
            assert_eq!(
                c_full.as_ref().map(|c| param_hash(c)),
                c_tail.as_ref().map(|c| param_hash(c))
            );
        }

        // The log file holds the whole run: header plus one row per step.
        let text = std::fs::read_to_string(dir.path().join(LOSS_LOG_FILE)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + full.log.len());
        assert_eq!(lines[0], LogRow::csv_header(2));
        assert_eq!(lines[1], full.log[0].csv_row());
    }

    #[test]
    fn run_directory_gets_checkpoints_a_best_marker_and_a_log() {
        let mut cfg = tiny_cfg(TrainMode::V);
        cfg.max_epochs = 2;
        let corpus = tiny_corpus(25, 2);
        let dir = tempfile::tempdir().unwrap();
        let out = run_training(&cfg, tiny_spec(), 2, &corpus, &corpus, Some(dir.path())).unwrap();

        for epoch in 1..=out.last.epoch {
            assert!(dir.path().join(checkpoint_file_name(epoch)).exists());
        }
        let best_path = best_checkpoint_path(dir.path()).unwrap();
        assert!(best_path.exists());
        let best = load_state(&best_path).unwrap();
        assert_eq!(best.epoch, out.best.epoch);
        assert_eq!(param_hash(&best.separator), param_hash(&out.best.separator));

        let text = std::fs::read_to_string(dir.path().join(LOSS_LOG_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1 + out.log.len());

        // V mode: source 1 logs critic numbers, source 2 prints empty
        // fields.
        let row = &out.log[0];
        assert!(row.critics[0].is_some());
        assert!(row.critics[1].is_none());
        let csv = row.csv_row();
        assert_eq!(csv.matches(',').count(), 5 + 4);
        assert!(csv.ends_with(','));
    }

    #[test]
    fn checkpoints_round_trip_through_disk() {
        let cfg = tiny_cfg(TrainMode::Va);
        let state = TrainState::new(&cfg, tiny_spec(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        save_state(&path, &state).unwrap();
        let back = load_state(&path).unwrap();
        assert_eq!(param_hash(&state.separator), param_hash(&back.separator));
        assert_eq!(state.rng, back.rng);
        assert_eq!(state.best_validation, back.best_validation);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny_cfg(TrainMode::Baseline);
        cfg.weights.alpha = 0.01;
        assert!(cfg.validate().is_err(), "baseline with alpha > 0 passed");

        let mut cfg = tiny_cfg(TrainMode::V);
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg(TrainMode::V);
        cfg.learning_rate = f64::NAN;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg(TrainMode::V);
        cfg.patience_epochs = 0;
        assert!(cfg.validate().is_err());

        assert_eq!("V".parse::<TrainMode>().unwrap(), TrainMode::V);
        assert_eq!("baseline".parse::<TrainMode>().unwrap(), TrainMode::Baseline);
        assert!("va".parse::<TrainMode>().is_err());
        assert_eq!(TrainMode::Va.to_string(), "VA");
    }

    #[test]
    fn mode_from_config_carries_the_published_weights() {
        let v = TrainConfig::for_mode(TrainMode::V, 1);
        assert_eq!((v.weights.alpha, v.weights.beta), (0.01, 0.01));
        let va = TrainConfig::for_mode(TrainMode::Va, 1);
        assert_eq!((va.weights.alpha, va.weights.beta), (0.001, 0.001));
        let base = TrainConfig::for_mode(TrainMode::Baseline, 1);
        assert_eq!((base.weights.alpha, base.weights.beta), (0.0, 0.0));
        assert_eq!(base.learning_rate, 5e-5);
        assert_eq!(base.n_disc, 5);
        assert_eq!(base.patience_epochs, 6);
        base.validate().unwrap();
    }
}
