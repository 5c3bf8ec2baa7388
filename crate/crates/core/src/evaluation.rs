//! Track-wise separation quality: SDR / SIR / SAR on time-domain
//! reconstructions.
//!
//! An estimate is split against the reference stems into a target part, an
//! interference part, and an artifact part by orthogonal projection, and the
//! three energy ratios are reported in dB. Projections are time-invariant
//! (plain least squares over the whole track, no distortion filters), which
//! makes every metric scale-invariant and deterministic. Full tracks are
//! separated by tiling the spectrogram with non-overlapping output windows
//! and resynthesised with the mixture phase.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array2, Axis};

use crate::audio::{self, Waveform};
use crate::data::{parse_manifest, Pool, MANIFEST_NAME};
use crate::separator::SeparatorModel;
use crate::{Error, Result};

/// Pivot floor, relative to the largest reference energy, below which the
/// reference Gram matrix is treated as singular.
const GRAM_TOL: f64 = 1e-12;

/// Orthogonal split of an estimate against a reference set. The parts sum to
/// the estimate exactly: `estimate = s_target + e_interf + e_artif`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Projection of the estimate onto the target reference alone.
    pub s_target: Vec<f64>,
    /// Remainder of the projection onto the span of all references.
    pub e_interf: Vec<f64>,
    /// Residual outside the reference span.
    pub e_artif: Vec<f64>,
}

/// Energy ratios of a [`Decomposition`] in dB. A zero denominator yields
/// `+inf`; a zero numerator over nonzero energy yields `-inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub sdr: f64,
    pub sir: f64,
    pub sar: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the symmetric positive-definite system `gram · c = rhs` by Gaussian
/// elimination with partial pivoting. The system is tiny (one row per
/// source), so no factorisation library is warranted.
fn solve_gram(mut gram: Array2<f64>, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let n = rhs.len();
    let scale = gram
        .diag()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&a, &b| gram[(a, col)].abs().total_cmp(&gram[(b, col)].abs()))
            .unwrap();
        if gram[(pivot_row, col)].abs() <= GRAM_TOL * scale {
            return Err(Error::Eval(
                "references are linearly dependent; the projection is not unique".into(),
            ));
        }
        if pivot_row != col {
            for j in 0..n {
                gram.swap((col, j), (pivot_row, j));
            }
            rhs.swap(col, pivot_row);
        }
        for row in col + 1..n {
            let f = gram[(row, col)] / gram[(col, col)];
            for j in col..n {
                gram[(row, j)] -= f * gram[(col, j)];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = rhs[col];
        for j in col + 1..n {
            v -= gram[(col, j)] * rhs[j];
        }
        rhs[col] = v / gram[(col, col)];
    }
    Ok(rhs)
}

/// Splits `estimate` against `references` with respect to target source `k`.
///
/// `s_target` is the projection of the estimate onto reference `k` alone,
/// `e_interf` is the rest of its projection onto the span of all references,
/// and `e_artif` is the residual. All signals must have equal length;
/// reference `k` must have nonzero energy and the reference set must be
/// linearly independent.
pub fn decompose(estimate: &[f64], references: &[&[f64]], k: usize) -> Result<Decomposition> {
    let n = estimate.len();
    if references.is_empty() || k >= references.len() {
        return Err(Error::Eval(format!(
            "target source {} of {} references",
            k + 1,
            references.len()
        )));
    }
    if let Some(r) = references.iter().find(|r| r.len() != n) {
        return Err(Error::Eval(format!(
            "reference has {} samples but the estimate has {n}",
            r.len()
        )));
    }
    let kk = references.len();
    let mut gram = Array2::<f64>::zeros((kk, kk));
    for i in 0..kk {
        for j in i..kk {
            let g = dot(references[i], references[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    if let Some(i) = (0..kk).find(|&i| gram[(i, i)] <= 0.0) {
        return Err(Error::Eval(format!("reference {} has zero energy", i + 1)));
    }
    let rhs: Vec<f64> = references.iter().map(|r| dot(estimate, r)).collect();
    let target_gain = rhs[k] / gram[(k, k)];
    let coeffs = solve_gram(gram, rhs)?;

    let s_target: Vec<f64> = references[k].iter().map(|r| target_gain * r).collect();
    let mut span = vec![0.0; n];
    for (c, r) in coeffs.iter().zip(references) {
        for (p, x) in span.iter_mut().zip(*r) {
            *p += c * x;
        }
    }
    let e_interf: Vec<f64> = span.iter().zip(&s_target).map(|(p, s)| p - s).collect();
    let e_artif: Vec<f64> = estimate.iter().zip(&span).map(|(e, p)| e - p).collect();
    Ok(Decomposition {
        s_target,
        e_interf,
        e_artif,
    })
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn db_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (num / den).log10()
    }
}

/// Energy ratios of a decomposition:
/// SDR = 10·log₁₀(‖s_target‖² / ‖e_interf + e_artif‖²),
/// SIR = 10·log₁₀(‖s_target‖² / ‖e_interf‖²),
/// SAR = 10·log₁₀(‖s_target + e_interf‖² / ‖e_artif‖²).
pub fn sdr_sir_sar(d: &Decomposition) -> Metrics {
    let target = energy(&d.s_target);
    let distortion = energy(
        &d.e_interf
            .iter()
            .zip(&d.e_artif)
            .map(|(i, a)| i + a)
            .collect::<Vec<_>>(),
    );
    let in_span = energy(
        &d.s_target
            .iter()
            .zip(&d.e_interf)
            .map(|(s, i)| s + i)
            .collect::<Vec<_>>(),
    );
    Metrics {
        sdr: db_ratio(target, distortion),
        sir: db_ratio(target, energy(&d.e_interf)),
        sar: db_ratio(in_span, energy(&d.e_artif)),
    }
}

/// One fully supervised track held in the time domain for evaluation.
#[derive(Clone, Debug)]
pub struct TestTrack {
    /// Directory of the mixture, e.g. `paired/track0003`.
    pub name: String,
    /// First path component of the mixture, used to group means.
    pub subset: String,
    pub mixture: Waveform,
    /// Reference stems, one per source, trimmed to the mixture's length.
    pub references: Vec<Waveform>,
}

/// Loads the paired tracks of `root/manifest.txt` as evaluation tracks.
/// Mixture and stems are trimmed to their common length.
pub fn load_test_tracks(root: &Path, sources: usize) -> Result<Vec<TestTrack>> {
    let manifest_path = root.join(MANIFEST_NAME);
    let text =
        std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let entries = parse_manifest(&text)?;

    let mut tracks: Vec<TestTrack> = Vec::new();
    let mut open: Option<(TestTrack, Vec<bool>)> = None;
    let close = |pair: Option<(TestTrack, Vec<bool>)>, out: &mut Vec<TestTrack>| -> Result<()> {
        if let Some((mut track, seen)) = pair {
            if let Some(i) = seen.iter().position(|s| !s) {
                return Err(Error::Eval(format!(
                    "test track {} is missing source {}",
                    track.name,
                    i + 1
                )));
            }
            let common = track
                .references
                .iter()
                .map(|w| w.samples.len())
                .fold(track.mixture.samples.len(), usize::min);
            track.mixture.samples.truncate(common);
            for r in &mut track.references {
                r.samples.truncate(common);
            }
            out.push(track);
        }
        Ok(())
    };

    for entry in entries.iter().filter(|e| e.pool == Pool::Paired) {
        let wave = audio::ingest(&root.join(&entry.path))?;
        match entry.source {
            None => {
                close(open.take(), &mut tracks)?;
                let dir = entry.path.parent().unwrap_or_else(|| Path::new(""));
                let subset = entry
                    .path
                    .components()
                    .next()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .unwrap_or_default();
                let rate = wave.sample_rate;
                open = Some((
                    TestTrack {
                        name: dir.to_string_lossy().into_owned(),
                        subset,
                        mixture: wave,
                        references: vec![
                            Waveform {
                                samples: Vec::new(),
                                sample_rate: rate,
                            };
                            sources
                        ],
                    },
                    vec![false; sources],
                ));
            }
            Some(k) => {
                let (track, seen) = open.as_mut().ok_or_else(|| {
                    Error::Eval(format!("stem {:?} appears before its mixture", entry.path))
                })?;
                if k >= sources || seen[k] {
                    return Err(Error::Eval(format!(
                        "unexpected stem for source {} at {:?}",
                        k + 1,
                        entry.path
                    )));
                }
                track.references[k] = wave;
                seen[k] = true;
            }
        }
    }
    close(open.take(), &mut tracks)?;
    Ok(tracks)
}

/// Separates a full track: the spectrogram is tiled with non-overlapping
/// output windows (the last one zero-padded on input and trimmed on output),
/// each source's log-magnitude estimate is assembled over all frames, and the
/// waveforms are rebuilt with the mixture phase.
pub fn separate_track(model: &SeparatorModel, mixture: &Waveform) -> Result<Vec<Waveform>> {
    let spec = audio::stft(mixture)?;
    let grids = tile_estimates(model, &spec.magnitude())?;
    grids
        .iter()
        .map(|g| audio::reconstruct(g, &spec, mixture.samples.len()))
        .collect()
}

/// Runs the separator over every output window of a full linear-magnitude
/// grid and stitches the per-source log-magnitude estimates back together,
/// one `[frames, out_bins]` grid per source.
pub fn tile_estimates(model: &SeparatorModel, lin: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
    let geom = model.plan.geometry();
    let frames = lin.nrows();
    let mut grids = vec![Array2::<f64>::zeros((frames, geom.out_bins)); model.spec.sources];
    for w in 0..frames.div_ceil(geom.out_frames) {
        let out0 = w * geom.out_frames;
        let start = out0 as isize - geom.time_margin as isize;
        let window = audio::log_normalize(&audio::cut_input_window(lin, &geom, start))?;
        let outputs = model.forward(&window.insert_axis(Axis(0)));
        let take = geom.out_frames.min(frames - out0);
        for (grid, out) in grids.iter_mut().zip(&outputs) {
            grid.slice_mut(s![out0..out0 + take, ..])
                .assign(&out.slice(s![0, ..take, ..]));
        }
    }
    Ok(grids)
}

/// Metrics of one evaluated track.
#[derive(Clone, Debug)]
pub struct TrackScores {
    pub track: String,
    pub subset: String,
    /// One entry per source, in source order.
    pub per_source: Vec<Metrics>,
}

/// Finite-value means of one subset. `non_finite` counts metric values that
/// were flagged infinite and therefore left out of the means.
#[derive(Clone, Debug)]
pub struct SubsetMeans {
    pub subset: String,
    pub tracks: usize,
    pub per_source: Vec<Metrics>,
    pub non_finite: usize,
}

/// Evaluation results for one model over a set of test tracks.
#[derive(Clone, Debug, Default)]
pub struct EvalReport {
    /// Label of the evaluated configuration, e.g. `baseline` or `V`.
    pub mode: String,
    pub tracks: Vec<TrackScores>,
    /// Tracks whose separation or decomposition failed, with the reason.
    /// They are excluded from all means.
    pub failures: Vec<(String, String)>,
}

impl EvalReport {
    /// Per-subset means in first-appearance order, plus an `all` row when
    /// more than one subset is present. Only finite values enter a mean; a
    /// cell with no finite values is `NaN`.
    pub fn subset_means(&self) -> Vec<SubsetMeans> {
        if self.tracks.is_empty() {
            return Vec::new();
        }
        let mut subsets: Vec<String> = Vec::new();
        for t in &self.tracks {
            if !subsets.contains(&t.subset) {
                subsets.push(t.subset.clone());
            }
        }
        let mut rows: Vec<SubsetMeans> = subsets
            .iter()
            .map(|s| self.mean_over(s, |t| t.subset == *s))
            .collect();
        if subsets.len() > 1 {
            rows.push(self.mean_over("all", |_| true));
        }
        rows
    }

    fn mean_over(&self, label: &str, keep: impl Fn(&TrackScores) -> bool) -> SubsetMeans {
        let picked: Vec<&TrackScores> = self.tracks.iter().filter(|t| keep(t)).collect();
        let sources = picked.iter().map(|t| t.per_source.len()).max().unwrap_or(0);
        let mut non_finite = 0;
        let mut per_source = Vec::with_capacity(sources);
        for k in 0..sources {
            let mut mean = |pick: fn(&Metrics) -> f64| {
                let values: Vec<f64> = picked
                    .iter()
                    .filter_map(|t| t.per_source.get(k))
                    .map(pick)
                    .collect();
                let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
                non_finite += values.len() - finite.len();
                if finite.is_empty() {
                    f64::NAN
                } else {
                    finite.iter().sum::<f64>() / finite.len() as f64
                }
            };
            per_source.push(Metrics {
                sdr: mean(|m| m.sdr),
                sir: mean(|m| m.sir),
                sar: mean(|m| m.sar),
            });
        }
        SubsetMeans {
            subset: label.to_string(),
            tracks: picked.len(),
            per_source,
            non_finite,
        }
    }

    /// Per-track CSV with columns `track,subset,source,SDR,SIR,SAR`
    /// (source indices 1-based, values in dB).
    pub fn csv(&self) -> String {
        let mut out = String::from("track,subset,source,SDR,SIR,SAR\n");
        for t in &self.tracks {
            for (k, m) in t.per_source.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.4},{:.4},{:.4}",
                    t.track,
                    t.subset,
                    k + 1,
                    m.sdr,
                    m.sir,
                    m.sar
                );
            }
        }
        out
    }

    /// Mean table with one row per metric and source and one value column per
    /// subset, labelled with the mode.
    pub fn means_table(&self) -> String {
        let means = self.subset_means();
        let mut out = format!("mode: {}\n", self.mode);
        if !self.failures.is_empty() {
            let _ = writeln!(
                out,
                "{} track(s) failed and were excluded from the means",
                self.failures.len()
            );
        }
        if means.is_empty() {
            out.push_str("no tracks evaluated\n");
            return out;
        }
        let sources = means[0].per_source.len();
        let _ = write!(out, "{:<16}", "metric");
        for m in &means {
            let _ = write!(out, "{:>16}", format!("{} ({})", m.subset, m.tracks));
        }
        out.push('\n');
        for k in 0..sources {
            for (name, pick) in [
                ("SDR", (|m: &Metrics| m.sdr) as fn(&Metrics) -> f64),
                ("SIR", |m| m.sir),
                ("SAR", |m| m.sar),
            ] {
                let _ = write!(out, "{:<16}", format!("source {} {name}", k + 1));
                for m in &means {
                    let v = m.per_source.get(k).map(&pick).unwrap_or(f64::NAN);
                    let _ = write!(out, "{v:>16.2}");
                }
                out.push('\n');
            }
        }
        let skipped: usize = means.iter().map(|m| m.non_finite).sum();
        if skipped > 0 {
            let _ = writeln!(out, "{skipped} infinite value(s) left out of the means");
        }
        out
    }
}

/// Evaluates an arbitrary separation function over `tracks`. Tracks whose
/// separation or decomposition fails are recorded under
/// [`EvalReport::failures`] and skipped.
pub fn evaluate_tracks<F>(mode: &str, mut separate: F, tracks: &[TestTrack]) -> EvalReport
where
    F: FnMut(&TestTrack) -> Result<Vec<Waveform>>,
{
    let mut report = EvalReport {
        mode: mode.to_string(),
        ..Default::default()
    };
    for track in tracks {
        match score_track(&mut separate, track) {
            Ok(scores) => report.tracks.push(scores),
            Err(e) => report.failures.push((track.name.clone(), e.to_string())),
        }
    }
    report
}

/// Evaluates a separator model: [`separate_track`] on every test track, then
/// metrics per source.
pub fn evaluate_model(mode: &str, model: &SeparatorModel, tracks: &[TestTrack]) -> EvalReport {
    evaluate_tracks(mode, |t| separate_track(model, &t.mixture), tracks)
}

fn score_track<F>(separate: &mut F, track: &TestTrack) -> Result<TrackScores>
where
    F: FnMut(&TestTrack) -> Result<Vec<Waveform>>,
{
    let estimates = separate(track)?;
    if estimates.len() != track.references.len() {
        return Err(Error::Eval(format!(
            "{} estimates for {} references",
            estimates.len(),
            track.references.len()
        )));
    }
    let common = estimates
        .iter()
        .chain(&track.references)
        .map(|w| w.samples.len())
        .min()
        .unwrap_or(0);
    let refs: Vec<&[f64]> = track
        .references
        .iter()
        .map(|w| &w.samples[..common])
        .collect();
    let per_source = estimates
        .iter()
        .enumerate()
        .map(|(k, est)| Ok(sdr_sir_sar(&decompose(&est.samples[..common], &refs, k)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrackScores {
        track: track.name.clone(),
        subset: track.subset.clone(),
        per_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;
    use crate::data::{generate_toy_corpus, ToyConfig};
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    /// Two exactly orthogonal references: a constant and an alternating sign
    /// pattern of equal energy.
    fn orthogonal_refs(n: usize) -> (Vec<f64>, Vec<f64>) {
        let a = vec![1.0; n];
        let b: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        (a, b)
    }

    #[test]
    fn perfect_estimate_has_no_interference_or_artifacts() {
        let (a, b) = orthogonal_refs(64);
        let d = decompose(&a, &[&a, &b], 0).unwrap();
        assert!(energy(&d.e_interf) < 1e-20);
        assert!(energy(&d.e_artif) < 1e-20);
        let m = sdr_sir_sar(&d);
        assert_eq!(m.sdr, f64::INFINITY);
        assert_eq!(m.sir, f64::INFINITY);
        assert_eq!(m.sar, f64::INFINITY);
    }

    #[test]
    fn projection_splits_orthogonal_components_exactly() {
        let (a, b) = orthogonal_refs(64);
        let est: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * x + 0.25 * y).collect();
        let d = decompose(&est, &[&a, &b], 0).unwrap();
        for i in 0..est.len() {
            assert!((d.s_target[i] - 0.5 * a[i]).abs() < 1e-12);
            assert!((d.e_interf[i] - 0.25 * b[i]).abs() < 1e-12);
            assert!(d.e_artif[i].abs() < 1e-12);
        }
        let m = sdr_sir_sar(&d);
        let expected_sir = 10.0 * (0.25 * energy(&a) / (0.0625 * energy(&b))).log10();
        assert!((m.sir - expected_sir).abs() < 1e-9);
        assert!((m.sir - 10.0 * 4.0f64.log10()).abs() < 1e-9);
        assert_eq!(m.sar, f64::INFINITY);
    }

    #[test]
    fn estimate_outside_the_span_is_all_artifact() {
        let (a, b) = orthogonal_refs(64);
        let est: Vec<f64> = (0..64)
            .map(|i| match i % 4 {
                0 => 1.0,
                2 => -1.0,
                _ => 0.0,
            })
            .collect();
        assert!(dot(&est, &a).abs() < 1e-12 && dot(&est, &b).abs() < 1e-12);
        let d = decompose(&est, &[&a, &b], 0).unwrap();
        assert!(energy(&d.s_target) < 1e-20);
        assert!(energy(&d.e_interf) < 1e-20);
        for (artifact, value) in d.e_artif.iter().zip(&est) {
            assert!((artifact - value).abs() < 1e-12);
        }
        let m = sdr_sir_sar(&d);
        assert_eq!(m.sdr, f64::NEG_INFINITY);
        assert_eq!(m.sar, f64::NEG_INFINITY);
    }

    #[test]
    fn scaling_the_estimate_leaves_sdr_unchanged() {
        let (a, b) = orthogonal_refs(64);
        for c in [0.01, 1.0, 250.0] {
            let est: Vec<f64> = a.iter().map(|x| c * x).collect();
            let m = sdr_sir_sar(&decompose(&est, &[&a, &b], 0).unwrap());
            // The projection absorbs the scale exactly; only rounding of the
            // projection coefficient keeps the ratio from a literal +inf.
            assert!(m.sdr > 200.0, "SDR {} at scale {c}", m.sdr);
            assert_eq!(m.sir, f64::INFINITY);
        }
    }

    #[test]
    fn decomposition_sums_exactly_and_is_orthogonal() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 96;
            let refs: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let est: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let views: Vec<&[f64]> = refs.iter().map(|r| r.as_slice()).collect();
            let d = decompose(&est, &views, 1).unwrap();
            for (i, value) in est.iter().enumerate() {
                let sum = d.s_target[i] + d.e_interf[i] + d.e_artif[i];
                assert!((sum - value).abs() <= 1e-12 * value.abs().max(1.0));
            }
            let norm =
                |x: &[f64]| energy(x).sqrt().max(1e-30);
            let pairs = [
                (&d.s_target, &d.e_interf),
                (&d.s_target, &d.e_artif),
                (&d.e_interf, &d.e_artif),
            ];
            for (x, y) in pairs {
                assert!(dot(x, y).abs() <= 1e-8 * norm(x) * norm(y));
            }
            let m = sdr_sir_sar(&d);
            if m.sdr.is_finite() {
                assert!(m.sir >= m.sdr - 1e-9);
                assert!(m.sar >= m.sdr - 1e-9);
            }
        }
    }

    #[test]
    fn noise_of_increasing_energy_degrades_sdr_and_sar() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let n = 512;
        let reference: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 7.0 * i as f64 / n as f64).sin())
            .collect();
        let other: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 13.0 * i as f64 / n as f64).cos())
            .collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut last = Metrics {
            sdr: f64::INFINITY,
            sir: 0.0,
            sar: f64::INFINITY,
        };
        for scale in [0.01, 0.03, 0.1, 0.3, 1.0] {
            let est: Vec<f64> = reference
                .iter()
                .zip(&noise)
                .map(|(r, z)| r + scale * z)
                .collect();
            let m = sdr_sir_sar(&decompose(&est, &[&reference, &other], 0).unwrap());
            assert!(m.sdr < last.sdr);
            assert!(m.sar < last.sar);
            last = m;
        }
    }

    #[test]
    fn degenerate_references_are_rejected() {
        let (a, _) = orthogonal_refs(32);
        let doubled: Vec<f64> = a.iter().map(|x| -3.0 * x).collect();
        let err = decompose(&a, &[&a, &doubled], 0).unwrap_err();
        assert!(err.to_string().contains("linearly dependent"));

        let zeros = vec![0.0; 32];
        let err = decompose(&a, &[&a, &zeros], 0).unwrap_err();
        assert!(err.to_string().contains("zero energy"));

        let short = vec![1.0; 16];
        assert!(decompose(&a, &[&a, &short], 0).is_err());
        assert!(decompose(&a, &[&a], 1).is_err());
    }

    #[test]
    fn empty_track_list_yields_empty_report() {
        let report = evaluate_tracks("baseline", |_| unreachable!(), &[]);
        assert!(report.tracks.is_empty() && report.failures.is_empty());
        assert_eq!(report.csv(), "track,subset,source,SDR,SIR,SAR\n");
        assert!(report.subset_means().is_empty());
        assert!(report.means_table().contains("no tracks evaluated"));
    }

    #[test]
    fn failing_tracks_are_counted_and_excluded() {
        let (a, b) = orthogonal_refs(128);
        let good = TestTrack {
            name: "t0".into(),
            subset: "paired".into(),
            mixture: wave(a.iter().zip(&b).map(|(x, y)| x + y).collect()),
            references: vec![wave(a.clone()), wave(b.clone())],
        };
        let mut bad = good.clone();
        bad.name = "t1".into();
        bad.references[1] = wave(vec![0.0; 128]);
        let report = evaluate_tracks(
            "V",
            |t| Ok(t.references.clone()),
            &[good, bad],
        );
        assert_eq!(report.tracks.len(), 1);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].0, "t1");
        assert!(report.means_table().contains("1 track(s) failed"));
        let means = report.subset_means();
        assert_eq!(means.len(), 1);
        assert_eq!(means[0].tracks, 1);
    }

    fn toy_tracks(dir: &Path, n: usize, seconds: f64, seed: u64, corr: f64) -> Vec<TestTrack> {
        let cfg = ToyConfig {
            n_paired_tracks: n,
            n_unlabelled_tracks: 1,
            n_solo_tracks_per_source: 1,
            track_seconds: seconds,
            seed,
            correlation_strength: corr,
        };
        generate_toy_corpus(&cfg, dir).unwrap();
        load_test_tracks(dir, 2).unwrap()
    }

    #[test]
    fn oracle_magnitudes_reconstruct_above_thirty_db() {
        let dir = tempfile::tempdir().unwrap();
        // Fully correlated pitches keep the two sources' spectral supports
        // disjoint (the voice's harmonics of 2x the accompaniment root never
        // meet the triad's third or fifth), so the mixture-phase bound of
        // this pipeline stays well above the 30 dB floor; at lower
        // correlation, unlucky pitch offsets of -5 or -8 semitones can land
        // an accompaniment component on the voice fundamental and drag
        // single tracks far below it.
        let tracks = toy_tracks(dir.path(), 4, 4.0, 401, 1.0);
        assert_eq!(tracks.len(), 4);
        assert_eq!(tracks[0].subset, "paired");

        let oracle = |t: &TestTrack| -> Result<Vec<Waveform>> {
            let spec = audio::stft(&t.mixture)?;
            t.references
                .iter()
                .map(|r| {
                    let mag = audio::stft(r)?.magnitude();
                    let est =
                        audio::log_normalize(&mag.slice(s![.., ..mag.ncols() - 1]).to_owned())?;
                    audio::reconstruct(&est, &spec, t.mixture.samples.len())
                })
                .collect()
        };
        let report = evaluate_tracks("oracle", oracle, &tracks);
        assert!(report.failures.is_empty());
        let means = report.subset_means();
        for m in &means[0].per_source {
            assert!(m.sdr > 30.0, "oracle SDR {:.2} dB not above 30 dB", m.sdr);
        }
        let csv = report.csv();
        assert_eq!(csv.lines().count(), 1 + 2 * tracks.len());
        assert!(csv.lines().nth(1).unwrap().starts_with("paired/track0000,paired,1,"));
    }

    #[test]
    fn mixture_estimate_matches_direct_projection_ratio() {
        let dir = tempfile::tempdir().unwrap();
        let tracks = toy_tracks(dir.path(), 1, 3.0, 402, 0.5);
        let report = evaluate_tracks(
            "mixture",
            |t| Ok(vec![t.mixture.clone(); 2]),
            &tracks,
        );
        assert!(report.failures.is_empty());

        let t = &tracks[0];
        let mix = &t.mixture.samples;
        let voice = &t.references[0].samples;
        let acc = &t.references[1].samples;
        let (gvv, gva, gaa) = (dot(voice, voice), dot(voice, acc), dot(acc, acc));
        let (bv, ba) = (dot(mix, voice), dot(mix, acc));
        let det = gvv * gaa - gva * gva;
        let cv = (bv * gaa - ba * gva) / det;
        let ca = (gvv * ba - gva * bv) / det;
        let s_target: Vec<f64> = voice.iter().map(|v| bv / gvv * v).collect();
        let e_interf: Vec<f64> = voice
            .iter()
            .zip(acc)
            .zip(&s_target)
            .map(|((v, a), s)| cv * v + ca * a - s)
            .collect();
        let expected = 10.0 * (energy(&s_target) / energy(&e_interf)).log10();
        let got = report.tracks[0].per_source[0].sir;
        assert!(
            (got - expected).abs() < 1e-6,
            "vocal SIR {got:.6} vs direct projection {expected:.6}"
        );
    }

    #[test]
    fn tiling_stitches_windows_in_output_order() {
        let spec = crate::separator::SeparatorSpec {
            sources: 2,
            levels: 1,
            base_filters: 2,
            input_frames: 10,
            fft_bins: 17,
        };
        let model = SeparatorModel::seeded(spec, 7).unwrap();
        let geom = model.plan.geometry();
        assert_eq!((geom.out_frames, geom.time_margin), (2, 4));
        // 29 frames: an odd count, so the last of the 2-frame output windows
        // must be trimmed to a single frame.
        let mut rng = ChaCha20Rng::seed_from_u64(20);
        let lin = Array2::from_shape_simple_fn((29, 17), || rng.random_range(0.0..2.0));

        let grids = tile_estimates(&model, &lin).unwrap();
        assert_eq!(grids.len(), 2);
        assert_eq!(grids[0].dim(), (29, geom.out_bins));

        // Hand-check two windows against direct forward passes: a full
        // window in the middle and the trimmed final one.
        for (out0, take) in [(6, 2), (28, 1)] {
            let start = out0 as isize - geom.time_margin as isize;
            let window =
                audio::log_normalize(&audio::cut_input_window(&lin, &geom, start)).unwrap();
            let direct = model.forward(&window.insert_axis(Axis(0)));
            for (grid, d) in grids.iter().zip(&direct) {
                for t in 0..take {
                    for b in 0..geom.out_bins {
                        assert_eq!(grid[(out0 + t, b)], d[(0, t, b)]);
                    }
                }
            }
        }
    }

    #[test]
    fn separate_track_handles_real_spectra_end_to_end() {
        let spec = crate::separator::SeparatorSpec {
            sources: 2,
            levels: 1,
            base_filters: 1,
            input_frames: 10,
            fft_bins: audio::N_BINS,
        };
        let model = SeparatorModel::seeded(spec, 7).unwrap();
        // 7680 samples -> 31 frames, trimming the final output window.
        let mixture = wave((0..7680).map(|i| (0.3 * i as f64).sin() * 0.4).collect());
        let estimates = separate_track(&model, &mixture).unwrap();
        assert_eq!(estimates.len(), 2);
        for est in &estimates {
            assert_eq!(est.samples.len(), mixture.samples.len());
            assert!(est.samples.iter().all(|v| v.is_finite()));
        }

        // A zeroed model estimates zero magnitude on every predicted bin;
        // only the Nyquist pass-through from the mixture survives, and the
        // tone lives far below Nyquist.
        let mut silent = model.clone();
        crate::separator::zero_params(&mut silent);
        let mix_energy: f64 = mixture.samples.iter().map(|v| v * v).sum();
        for est in separate_track(&silent, &mixture).unwrap() {
            let e: f64 = est.samples.iter().map(|v| v * v).sum();
            assert!(e <= 1e-6 * mix_energy, "silent estimate energy {e}");
        }
    }
}
