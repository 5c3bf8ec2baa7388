//! The operations behind the command-line binary: corpus synthesis,
//! training with transparent resume, checkpoint evaluation, heatmap
//! rendering, and cross-run comparison.
//!
//! Each command is a plain function over an [`ExperimentConfig`], so the
//! binary only adds argument parsing and exit codes. Every command writes
//! the fully-resolved configuration next to its outputs. Run directories
//! are append-only: training adds checkpoints and log rows, and evaluation
//! and visualization land in subdirectories named after the checkpoint
//! they came from.

use std::path::{Path, PathBuf};

use ndarray::Axis;

use crate::audio::{cut_input_window, log_normalize, stft};
use crate::config::ExperimentConfig;
use crate::data::{generate_toy_corpus, DataCorpus, MANIFEST_NAME};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_model, load_test_tracks, EvalReport, Metrics, TestTrack, TrackScores,
};
use crate::training::{best_checkpoint_path, load_state, resume_training, run_training};
use crate::viz;

/// File name of the resolved configuration written next to outputs.
pub const CONFIG_FILE: &str = "config.txt";

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, cfg.resolved().render()).map_err(|e| Error::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Synthesizes the toy corpus under `data.root` and records the resolved
/// configuration beside the manifest. Refuses to touch a directory that
/// already holds a corpus.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let root = PathBuf::from(&cfg.data_root);
    let manifest = root.join(MANIFEST_NAME);
    if manifest.exists() {
        return Err(Error::Config(format!(
            "{} already exists; delete the corpus or pick a fresh data.root",
            manifest.display()
        )));
    }
    generate_toy_corpus(&cfg.toy_config(), &root)?;
    write_config(&root, cfg)?;
    Ok(root)
}

/// Splits a corpus for training: the first `train.supervised_tracks` paired
/// tracks keep the full unlabelled and solo pools, and the following
/// `train.validation_tracks` paired tracks become the validation set. The
/// remaining paired tracks are never seen during training.
pub fn training_split(
    cfg: &ExperimentConfig,
    corpus: &DataCorpus,
) -> Result<(DataCorpus, DataCorpus)> {
    let sup = cfg.train_supervised_tracks;
    let mut supervised = corpus.paired_slice(0, sup)?;
    supervised.unlabelled = corpus.unlabelled.clone();
    supervised.solo = corpus.solo.clone();
    let validation = corpus.paired_slice(sup, cfg.train_validation_tracks)?;
    Ok((supervised, validation))
}

/// The newest `epoch_*.ckpt` in a run directory, with its epoch number.
pub fn latest_checkpoint(run_dir: &Path) -> Result<Option<(PathBuf, usize)>> {
    let entries = std::fs::read_dir(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let mut newest: Option<(PathBuf, usize)> = None;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(run_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let epoch = name
            .strip_prefix("epoch_")
            .and_then(|s| s.strip_suffix(".ckpt"))
            .and_then(|s| s.parse::<usize>().ok());
        if let Some(epoch) = epoch {
            if newest.as_ref().is_none_or(|(_, e)| epoch > *e) {
                newest = Some((entry.path(), epoch));
            }
        }
    }
    Ok(newest)
}

/// Resolves `best`, `last`, or an explicit checkpoint file name inside a
/// run directory.
pub fn resolve_checkpoint(run_dir: &Path, which: &str) -> Result<PathBuf> {
    match which {
        "best" => best_checkpoint_path(run_dir),
        "last" => latest_checkpoint(run_dir)?.map(|(p, _)| p).ok_or_else(|| {
            Error::Checkpoint(format!("no checkpoints in {}", run_dir.display()))
        }),
        name => {
            let path = run_dir.join(name);
            if path.is_file() {
                Ok(path)
            } else {
                Err(Error::Checkpoint(format!(
                    "no checkpoint {} in {}",
                    name,
                    run_dir.display()
                )))
            }
        }
    }
}

/// The configuration projected onto the keys that shape a run's training
/// trajectory. Stopping conditions (`train.max_epochs`,
/// `train.patience_epochs`) and command plumbing (`run.*`, `eval.*`,
/// `viz.*`, `report.*`) are neutralized: none of them enter the training
/// arithmetic, and resuming is bit-identical to an uninterrupted run, so a
/// run extended under a raised epoch budget is still reproduced from
/// scratch by its final configuration.
fn training_identity(cfg: &ExperimentConfig) -> ExperimentConfig {
    let neutral = ExperimentConfig::default();
    ExperimentConfig {
        train_max_epochs: neutral.train_max_epochs,
        train_patience_epochs: neutral.train_patience_epochs,
        run_root: neutral.run_root,
        run_name: neutral.run_name,
        eval_data_root: neutral.eval_data_root,
        eval_checkpoint: neutral.eval_checkpoint,
        viz_track: neutral.viz_track,
        viz_source: neutral.viz_source,
        viz_frame: neutral.viz_frame,
        viz_max_bin: neutral.viz_max_bin,
        viz_checkpoint: neutral.viz_checkpoint,
        report_runs: neutral.report_runs,
        report_output: neutral.report_output,
        ..cfg.resolved()
    }
}

/// What [`cmd_train`] did.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    /// Epoch of the checkpoint training picked up from, if any.
    pub resumed_at: Option<usize>,
    pub best_epoch: usize,
    pub best_validation: f64,
    /// Epochs completed over the whole run, resumed stretches included.
    pub final_epoch: usize,
}

/// Trains (or, when the run directory already holds checkpoints, resumes)
/// the run described by the configuration. A resume must agree with the
/// run's recorded configuration on every key that steers training; only
/// the epoch budget and patience may change between invocations.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let run_dir = cfg.run_dir();
    create_dir(&run_dir)?;

    let cfg_path = run_dir.join(CONFIG_FILE);
    if cfg_path.exists() {
        let stored = ExperimentConfig::load(&cfg_path)?;
        if training_identity(&stored) != training_identity(cfg) {
            return Err(Error::Config(format!(
                "{} records a different experiment; a resume may only change \
                 train.max_epochs and train.patience_epochs — start a new run.name instead",
                cfg_path.display()
            )));
        }
    }
    write_config(&run_dir, cfg)?;

    let spec = cfg.separator_spec();
    let tc = cfg.train_config();
    let corpus = DataCorpus::load(Path::new(&cfg.data_root), spec.sources)?;
    let (supervised, validation) = training_split(cfg, &corpus)?;

    let resume_from = latest_checkpoint(&run_dir)?;
    let outcome = match &resume_from {
        Some((path, _)) => {
            let state = load_state(path)?;
            resume_training(state, &tc, &supervised, &validation, Some(&run_dir))?
        }
        None => run_training(
            &tc,
            spec,
            cfg.model_critic_base_filters,
            &supervised,
            &validation,
            Some(&run_dir),
        )?,
    };

    Ok(TrainSummary {
        run_dir,
        resumed_at: resume_from.map(|(_, e)| e),
        best_epoch: outcome.best.epoch,
        best_validation: outcome.best.best_validation,
        final_epoch: outcome.last.epoch,
    })
}

/// The test set for a trained run: the paired tracks of `eval.data_root`,
/// minus the leading supervised and validation tracks whenever the
/// evaluated corpus is the one the run trained on.
pub fn test_tracks(
    cfg: &ExperimentConfig,
    run_cfg: &ExperimentConfig,
    sources: usize,
) -> Result<Vec<TestTrack>> {
    let all = load_test_tracks(Path::new(&cfg.eval_data_root), sources)?;
    let skip = if cfg.eval_data_root == run_cfg.data_root {
        run_cfg.train_supervised_tracks + run_cfg.train_validation_tracks
    } else {
        0
    };
    if skip >= all.len() {
        return Err(Error::Eval(format!(
            "{} has {} paired tracks and the first {} are training material; nothing left to test",
            cfg.eval_data_root,
            all.len(),
            skip
        )));
    }
    Ok(all[skip..].to_vec())
}

/// What [`cmd_evaluate`] produced.
#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub out_dir: PathBuf,
    pub report: EvalReport,
}

/// Scores a checkpoint of the configured run on the held-out paired
/// tracks. Writes `report.csv` (per track and source), `means.csv`,
/// `means.txt`, and the resolved configuration under
/// `eval/<checkpoint>/` in the run directory.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvalSummary> {
    let run_dir = cfg.run_dir();
    let run_cfg = ExperimentConfig::load(&run_dir.join(CONFIG_FILE))?;
    let ckpt = resolve_checkpoint(&run_dir, &cfg.eval_checkpoint)?;
    let state = load_state(&ckpt)?;

    let tracks = test_tracks(cfg, &run_cfg, state.separator.spec.sources)?;
    let report = evaluate_model(&run_cfg.train_mode.to_string(), &state.separator, &tracks);

    let stem = ckpt
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let out_dir = run_dir.join("eval").join(stem);
    create_dir(&out_dir)?;
    let csv_path = out_dir.join("report.csv");
    std::fs::write(&csv_path, report.csv()).map_err(|e| Error::io(&csv_path, e))?;
    let means_csv_path = out_dir.join("means.csv");
    std::fs::write(&means_csv_path, means_csv(&report)).map_err(|e| Error::io(&means_csv_path, e))?;
    let means_path = out_dir.join("means.txt");
    std::fs::write(&means_path, report.means_table()).map_err(|e| Error::io(&means_path, e))?;
    write_config(&out_dir, cfg)?;

    Ok(EvalSummary { out_dir, report })
}

/// Machine-readable subset means: `subset,tracks,source,SDR,SIR,SAR`.
fn means_csv(report: &EvalReport) -> String {
    let mut out = String::from("subset,tracks,source,SDR,SIR,SAR\n");
    for m in report.subset_means() {
        for (k, v) in m.per_source.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{:.4},{:.4},{:.4}\n",
                m.subset,
                m.tracks,
                k + 1,
                v.sdr,
                v.sir,
                v.sar
            ));
        }
    }
    out
}

/// Renders one excerpt of a test track through a checkpoint: the estimated
/// log-magnitude grid for `viz.source` and the critic's score gradient with
/// respect to that estimate, both cropped to the lowest `viz.max_bin` bins
/// and written as PNG plus CSV under `viz/` in the run directory.
pub fn cmd_visualize(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let run_dir = cfg.run_dir();
    let ckpt = resolve_checkpoint(&run_dir, &cfg.viz_checkpoint)?;
    let state = load_state(&ckpt)?;
    let sources = state.separator.spec.sources;
    if cfg.viz_source == 0 || cfg.viz_source > sources {
        return Err(Error::Config(format!(
            "viz.source must be in 1..={sources}, got {}",
            cfg.viz_source
        )));
    }
    let k = cfg.viz_source - 1;
    let critic = state.critics[k].as_ref().ok_or_else(|| {
        Error::Config(format!(
            "the checkpoint trains no critic for source {}; visualize a run whose mode does",
            k + 1
        ))
    })?;

    let tracks = load_test_tracks(Path::new(&cfg.eval_data_root), sources)?;
    let track = if cfg.viz_track.is_empty() {
        tracks
            .first()
            .ok_or_else(|| Error::Eval(format!("{} has no paired tracks", cfg.eval_data_root)))?
    } else {
        tracks
            .iter()
            .find(|t| t.name == cfg.viz_track)
            .ok_or_else(|| {
                Error::Eval(format!(
                    "no paired track named {:?} in {} (names look like {:?})",
                    cfg.viz_track,
                    cfg.eval_data_root,
                    tracks.first().map(|t| t.name.as_str()).unwrap_or("")
                ))
            })?
    };

    let lin = stft(&track.mixture)?.magnitude();
    let geom = state.separator.plan.geometry();
    if cfg.viz_frame + geom.out_frames > lin.nrows() {
        return Err(Error::Config(format!(
            "viz.frame {} puts the {}-frame excerpt past the track's {} frames",
            cfg.viz_frame,
            geom.out_frames,
            lin.nrows()
        )));
    }
    let start = cfg.viz_frame as isize - geom.time_margin as isize;
    let window = log_normalize(&cut_input_window(&lin, &geom, start))?;
    let outputs = state.separator.forward(&window.insert_axis(Axis(0)));
    let estimate = outputs[k].index_axis(Axis(0), 0).to_owned();
    let gradient = critic.input_gradient(&outputs[k]);
    let gradient = gradient.index_axis(Axis(0), 0).to_owned();

    let stem = ckpt
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let out_dir = run_dir.join("viz").join(format!(
        "{stem}-{}-s{}-f{}",
        track.name.replace(['/', '\\'], "-"),
        k + 1,
        cfg.viz_frame
    ));
    create_dir(&out_dir)?;
    viz::export(
        &out_dir,
        "estimate",
        &viz::magnitude_heatmap(&estimate, cfg.viz_max_bin)?,
        &viz::grid_csv(&estimate, cfg.viz_max_bin)?,
    )?;
    viz::export(
        &out_dir,
        "gradient",
        &viz::gradient_heatmap(&gradient, cfg.viz_max_bin)?,
        &viz::grid_csv(&gradient, cfg.viz_max_bin)?,
    )?;
    write_config(&out_dir, cfg)?;
    Ok(out_dir)
}

/// What [`cmd_report`] produced.
#[derive(Clone, Debug)]
pub struct ReportSummary {
    pub out_dir: PathBuf,
    /// The comparison table, also written to `comparison.txt`.
    pub table: String,
}

/// Merges the evaluation results of several runs into one comparison:
/// rows are metric-per-source, columns are training modes, and runs of the
/// same mode (e.g. different seeds) pool their per-track scores before the
/// mean. Every run must already have been evaluated at `eval.checkpoint`.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<ReportSummary> {
    let entries: Vec<&str> = cfg
        .report_runs
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if entries.is_empty() {
        return Err(Error::Config(
            "report.runs is empty; list the run directories to merge".into(),
        ));
    }

    let mut reports: Vec<EvalReport> = Vec::new();
    for entry in &entries {
        let run_dir = resolve_run_dir(cfg, entry)?;
        let run_cfg = ExperimentConfig::load(&run_dir.join(CONFIG_FILE))?;
        let mode = run_cfg.train_mode.to_string();
        let ckpt = resolve_checkpoint(&run_dir, &cfg.eval_checkpoint)?;
        let stem = ckpt
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint".into());
        let csv_path = run_dir.join("eval").join(stem).join("report.csv");
        let tracks = parse_report_csv(&csv_path)?;
        match reports.iter_mut().find(|r| r.mode == mode) {
            Some(r) => r.tracks.extend(tracks),
            None => reports.push(EvalReport {
                mode,
                tracks,
                failures: Vec::new(),
            }),
        }
    }

    let table = comparison_table(&reports);
    let out_dir = PathBuf::from(&cfg.report_output);
    create_dir(&out_dir)?;
    let txt_path = out_dir.join("comparison.txt");
    std::fs::write(&txt_path, &table).map_err(|e| Error::io(&txt_path, e))?;
    let csv_path = out_dir.join("comparison.csv");
    std::fs::write(&csv_path, comparison_csv(&reports)).map_err(|e| Error::io(&csv_path, e))?;
    write_config(&out_dir, cfg)?;
    Ok(ReportSummary { out_dir, table })
}

/// A `report.runs` entry is either a directory path or a run name under
/// the effective run root; whichever holds a recorded configuration wins.
fn resolve_run_dir(cfg: &ExperimentConfig, entry: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(entry);
    if direct.join(CONFIG_FILE).is_file() {
        return Ok(direct);
    }
    let under_root = cfg.effective_run_root().join(entry);
    if under_root.join(CONFIG_FILE).is_file() {
        return Ok(under_root);
    }
    Err(Error::Config(format!(
        "no run directory at {entry:?}: neither {} nor {} holds a {CONFIG_FILE}",
        direct.display(),
        under_root.display()
    )))
}

/// Reads a per-track `report.csv` back into track scores.
fn parse_report_csv(path: &Path) -> Result<Vec<TrackScores>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, what: &str| {
        Error::Eval(format!("{} line {}: {what}", path.display(), line + 1))
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "track,subset,source,SDR,SIR,SAR")) => {}
        _ => return Err(bad(0, "expected the report.csv header")),
    }
    let mut tracks: Vec<TrackScores> = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let [track, subset, source, sdr, sir, sar] = fields.as_slice() else {
            return Err(bad(i, "expected 6 fields"));
        };
        let source: usize = source
            .parse()
            .map_err(|_| bad(i, "source must be an index"))?;
        let value = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| bad(i, "metrics must be numbers"))
        };
        let metrics = Metrics {
            sdr: value(sdr)?,
            sir: value(sir)?,
            sar: value(sar)?,
        };
        match tracks.last_mut() {
            Some(t) if t.track == *track => {
                if source != t.per_source.len() + 1 {
                    return Err(bad(i, "source indices must count up from 1"));
                }
                t.per_source.push(metrics);
            }
            _ => {
                if source != 1 {
                    return Err(bad(i, "each track must start at source 1"));
                }
                tracks.push(TrackScores {
                    track: track.to_string(),
                    subset: subset.to_string(),
                    per_source: vec![metrics],
                });
            }
        }
    }
    Ok(tracks)
}

type MetricColumn = (&'static str, fn(&Metrics) -> f64);

const METRIC_COLUMNS: [MetricColumn; 3] = [
    ("SDR", |m| m.sdr),
    ("SIR", |m| m.sir),
    ("SAR", |m| m.sar),
];

/// The pooled overall means of a report (the `all` row when several
/// subsets are present, otherwise the single subset's row).
fn overall_means(report: &EvalReport) -> Option<crate::evaluation::SubsetMeans> {
    report.subset_means().pop()
}

fn comparison_table(reports: &[EvalReport]) -> String {
    let means: Vec<_> = reports.iter().map(overall_means).collect();
    let sources = means
        .iter()
        .flatten()
        .map(|m| m.per_source.len())
        .max()
        .unwrap_or(0);
    let mut out = format!("{:<16}", "metric");
    for (r, m) in reports.iter().zip(&means) {
        let tracks = m.as_ref().map_or(0, |m| m.tracks);
        out.push_str(&format!("{:>16}", format!("{} ({tracks})", r.mode)));
    }
    out.push('\n');
    for k in 0..sources {
        for (name, pick) in METRIC_COLUMNS {
            out.push_str(&format!("{:<16}", format!("source {} {name}", k + 1)));
            for m in &means {
                let v = m
                    .as_ref()
                    .and_then(|m| m.per_source.get(k))
                    .map(pick)
                    .unwrap_or(f64::NAN);
                out.push_str(&format!("{v:>16.2}"));
            }
            out.push('\n');
        }
    }
    out
}

fn comparison_csv(reports: &[EvalReport]) -> String {
    let means: Vec<_> = reports.iter().map(overall_means).collect();
    let sources = means
        .iter()
        .flatten()
        .map(|m| m.per_source.len())
        .max()
        .unwrap_or(0);
    let mut out = String::from("source,metric");
    for r in reports {
        out.push(',');
        out.push_str(&r.mode);
    }
    out.push('\n');
    for k in 0..sources {
        for (name, pick) in METRIC_COLUMNS {
            out.push_str(&format!("{},{name}", k + 1));
            for m in &means {
                let v = m
                    .as_ref()
                    .and_then(|m| m.per_source.get(k))
                    .map(pick)
                    .unwrap_or(f64::NAN);
                out.push_str(&format!(",{v:.4}"));
            }
            out.push('\n');
        }
    }
    out
}
