//! Experiment configuration: one flat `key = value` file drives every
//! command.
//!
//! Keys are grouped by dotted section (`data.*` for corpus synthesis,
//! `model.*` for architecture, `train.*` for the schedule, `loss.*` for the
//! objective, plus `run.*`, `eval.*`, `viz.*`, `report.*` for command
//! plumbing). Every key has a default, unknown keys are errors, and the
//! fully-resolved configuration renders back to the same format, so the
//! copy written next to a run's outputs is both human-diffable and directly
//! reusable.

use std::path::{Path, PathBuf};

use crate::data::ToyConfig;
use crate::error::{Error, Result};
use crate::losses::{AdditiveDomain, LossWeights, SupervisedNorm};
use crate::separator::SeparatorSpec;
use crate::training::{TrainConfig, TrainMode};

/// Environment variable that overrides `run.root`.
pub const RUN_ROOT_ENV: &str = "STEMSEP_RUN_ROOT";

/// An `f64` that can be left to a context-dependent default. Parses from
/// `auto` or a number; prints the same way.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AutoF64(pub Option<f64>);

impl std::fmt::Display for AutoF64 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("auto"),
        }
    }
}

impl std::str::FromStr for AutoF64 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(AutoF64(None));
        }
        s.parse::<f64>()
            .map(|v| AutoF64(Some(v)))
            .map_err(|_| Error::Config(format!("expected a number or `auto`, got {s:?}")))
    }
}

macro_rules! config_keys {
    ($( $key:literal => $field:ident : $ty:ty = $default:expr, $doc:literal; )+) => {
        /// All experiment settings, one field per config key.
        #[derive(Clone, Debug, PartialEq)]
        pub struct ExperimentConfig {
            $( #[doc = $doc] pub $field: $ty, )+
        }

        impl Default for ExperimentConfig {
            fn default() -> Self {
                ExperimentConfig { $( $field: $default, )+ }
            }
        }

        impl ExperimentConfig {
            /// Every key with its one-line description, in file order.
            pub const KEYS: &'static [(&'static str, &'static str)] =
                &[ $( ($key, $doc), )+ ];

            fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $( $key => {
                        self.$field = value.parse::<$ty>().map_err(|e| {
                            Error::Config(format!("bad value for {key}: {e}"))
                        })?;
                    } )+
                    _ => {
                        return Err(Error::Config(format!("unknown key `{key}`")));
                    }
                }
                Ok(())
            }

            fn get(&self, key: &str) -> String {
                match key {
                    $( $key => self.$field.to_string(), )+
                    _ => unreachable!("key listing out of sync"),
                }
            }
        }
    };
}

config_keys! {
    "data.root" => data_root: String = "data/toy".into(),
        "Directory the corpus (WAVs + manifest) lives in.";
    "data.paired_tracks" => data_paired_tracks: usize = 220,
        "Paired tracks to synthesize (mixture plus per-source stems).";
    "data.unlabelled_tracks" => data_unlabelled_tracks: usize = 200,
        "Unlabelled mixture tracks to synthesize.";
    "data.solo_tracks_per_source" => data_solo_tracks_per_source: usize = 200,
        "Solo tracks to synthesize for each source.";
    "data.track_seconds" => data_track_seconds: f64 = 4.0,
        "Length of every synthesized track in seconds.";
    "data.seed" => data_seed: u64 = 1234,
        "Seed for corpus synthesis.";
    "data.correlation_strength" => data_correlation: f64 = 1.0,
        "Probability that both sources of a track share pitch class and onset grid.";

    "model.sources" => model_sources: usize = 2,
        "Number of sources the separator emits.";
    "model.levels" => model_levels: usize = 2,
        "Pooling stages in the separator's encoder.";
    "model.base_filters" => model_base_filters: usize = 8,
        "Separator channels after the first convolution; doubles per level.";
    "model.input_frames" => model_input_frames: usize = 54,
        "Excerpt length in STFT frames (must survive the pooling chain).";
    "model.fft_bins" => model_fft_bins: usize = 257,
        "Spectrogram bins per frame; the output grid covers all but the topmost.";
    "model.critic_base_filters" => model_critic_base_filters: usize = 8,
        "Critic channels in the first convolution; doubles per conv layer.";

    "train.mode" => train_mode: TrainMode = TrainMode::Baseline,
        "Training mode: baseline (supervised only), V (critic on source 1), VA (critic per source).";
    "train.seed" => train_seed: u64 = 1,
        "Seed for model initialization and batch sampling.";
    "train.learning_rate" => train_learning_rate: f64 = 5e-5,
        "Adam step size for the separator and the critics.";
    "train.separator_beta1" => train_separator_beta1: f64 = 0.9,
        "Adam first-moment decay for the separator.";
    "train.separator_beta2" => train_separator_beta2: f64 = 0.999,
        "Adam second-moment decay for the separator.";
    "train.critic_beta1" => train_critic_beta1: f64 = 0.5,
        "Adam first-moment decay for the critics.";
    "train.critic_beta2" => train_critic_beta2: f64 = 0.9,
        "Adam second-moment decay for the critics.";
    "train.adam_eps" => train_adam_eps: f64 = 1e-8,
        "Adam denominator guard for all optimizers.";
    "train.batch_size" => train_batch_size: usize = 64,
        "Excerpts per batch, for every batch kind.";
    "train.steps_per_epoch" => train_steps_per_epoch: usize = 1000,
        "Separator updates per epoch.";
    "train.max_epochs" => train_max_epochs: usize = 100,
        "Hard cap on the number of epochs.";
    "train.patience_epochs" => train_patience_epochs: usize = 6,
        "Consecutive epochs without validation improvement before stopping.";
    "train.n_disc" => train_n_disc: usize = 5,
        "Critic updates per separator update, for each active critic.";
    "train.alpha" => train_alpha: AutoF64 = AutoF64(None),
        "Adversarial loss weight; `auto` uses the mode's published value.";
    "train.beta" => train_beta: AutoF64 = AutoF64(None),
        "Additivity loss weight; `auto` uses the mode's published value.";
    "train.supervised_tracks" => train_supervised_tracks: usize = 20,
        "Leading paired tracks exposed to supervised training.";
    "train.validation_tracks" => train_validation_tracks: usize = 10,
        "Paired tracks (after the supervised ones) held out for validation.";

    "loss.supervised_norm" => loss_supervised_norm: SupervisedNorm = SupervisedNorm::Mse,
        "Supervised aggregation: mse or l2 (per-excerpt Euclidean).";
    "loss.additive_domain" => loss_additive_domain: AdditiveDomain = AdditiveDomain::Log,
        "Domain of the additivity penalty: log or linear magnitudes.";
    "loss.penalty_weight" => loss_penalty_weight: f64 = 10.0,
        "Gradient-penalty weight in the critic objective.";

    "run.root" => run_root: String = "runs".into(),
        "Directory run outputs are created under (env STEMSEP_RUN_ROOT overrides).";
    "run.name" => run_name: String = String::new(),
        "Run directory name; empty derives `<mode>-seed<seed>`.";

    "eval.data_root" => eval_data_root: String = "data/toy".into(),
        "Corpus directory whose paired tracks are evaluated as the test set.";
    "eval.checkpoint" => eval_checkpoint: String = "best".into(),
        "Checkpoint to evaluate: `best`, `last`, or a checkpoint file name.";

    "viz.track" => viz_track: String = String::new(),
        "Test-track name to visualize; empty takes the first track.";
    "viz.source" => viz_source: usize = 1,
        "1-based source index whose estimate and critic gradient are rendered.";
    "viz.frame" => viz_frame: usize = 0,
        "Output-grid frame the rendered excerpt starts at.";
    "viz.max_bin" => viz_max_bin: usize = 64,
        "Lower-frequency crop: render spectrogram bins below this index.";
    "viz.checkpoint" => viz_checkpoint: String = "best".into(),
        "Checkpoint to visualize: `best`, `last`, or a checkpoint file name.";

    "report.runs" => report_runs: String = String::new(),
        "Comma-separated run directories to merge into one comparison.";
    "report.output" => report_output: String = "report".into(),
        "Directory the merged comparison is written to.";
}

impl ExperimentConfig {
    /// Parses a config file's text: one `key = value` per line, `#` lines
    /// and blank lines ignored, later assignments to a key win.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    i + 1
                )));
            };
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Renders every key in file order. `parse(render(c))` reproduces `c`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (key, _) in Self::KEYS {
            let this = key.split('.').next().unwrap();
            if this != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = this;
            }
            out.push_str(&format!("{key} = {}\n", self.get(key)));
        }
        out
    }

    /// The default configuration with every key preceded by its
    /// description — a ready-to-edit template.
    pub fn documented_template() -> String {
        let cfg = ExperimentConfig::default();
        let mut out = String::new();
        let mut section = "";
        for (key, doc) in Self::KEYS {
            let this = key.split('.').next().unwrap();
            if this != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = this;
            }
            out.push_str(&format!("# {doc}\n{key} = {}\n", cfg.get(key)));
        }
        out
    }

    /// A copy with every context-dependent value made explicit: the weights
    /// the mode resolves to and the derived run name. This is the form
    /// written next to a run's outputs.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let tc = self.train_config();
        c.train_alpha = AutoF64(Some(tc.weights.alpha));
        c.train_beta = AutoF64(Some(tc.weights.beta));
        c.run_name = self.effective_run_name();
        c
    }

    /// The corpus-synthesis settings.
    pub fn toy_config(&self) -> ToyConfig {
        ToyConfig {
            n_paired_tracks: self.data_paired_tracks,
            n_unlabelled_tracks: self.data_unlabelled_tracks,
            n_solo_tracks_per_source: self.data_solo_tracks_per_source,
            track_seconds: self.data_track_seconds,
            seed: self.data_seed,
            correlation_strength: self.data_correlation,
        }
    }

    /// The separator architecture.
    pub fn separator_spec(&self) -> SeparatorSpec {
        SeparatorSpec {
            sources: self.model_sources,
            levels: self.model_levels,
            base_filters: self.model_base_filters,
            input_frames: self.model_input_frames,
            fft_bins: self.model_fft_bins,
        }
    }

    /// The training schedule, with `auto` weights resolved through the
    /// mode.
    pub fn train_config(&self) -> TrainConfig {
        let (alpha, beta) = self.train_mode.default_weights();
        TrainConfig {
            mode: self.train_mode,
            learning_rate: self.train_learning_rate,
            separator_beta1: self.train_separator_beta1,
            separator_beta2: self.train_separator_beta2,
            critic_beta1: self.train_critic_beta1,
            critic_beta2: self.train_critic_beta2,
            adam_eps: self.train_adam_eps,
            batch_size: self.train_batch_size,
            steps_per_epoch: self.train_steps_per_epoch,
            max_epochs: self.train_max_epochs,
            patience_epochs: self.train_patience_epochs,
            n_disc: self.train_n_disc,
            weights: LossWeights {
                alpha: self.train_alpha.0.unwrap_or(alpha),
                beta: self.train_beta.0.unwrap_or(beta),
                supervised_norm: self.loss_supervised_norm,
                additive_domain: self.loss_additive_domain,
                penalty_weight: self.loss_penalty_weight,
            },
            seed: self.train_seed,
        }
    }

    /// The run directory name, deriving `<mode>-seed<seed>` when unset.
    pub fn effective_run_name(&self) -> String {
        if self.run_name.is_empty() {
            format!("{}-seed{}", self.train_mode, self.train_seed)
        } else {
            self.run_name.clone()
        }
    }

    /// The directory runs live under: `run.root`, or the [`RUN_ROOT_ENV`]
    /// override when set.
    pub fn effective_run_root(&self) -> PathBuf {
        std::env::var_os(RUN_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(&self.run_root))
    }

    /// The run directory: the effective run root joined with the effective
    /// run name.
    pub fn run_dir(&self) -> PathBuf {
        self.effective_run_root().join(self.effective_run_name())
    }
}
