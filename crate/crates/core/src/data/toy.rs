//! Synthetic two-source corpus generator.
//!
//! Each track mixes a "voice": a frequency-modulated harmonic tone with
//! vibrato that sings in phrases with pauses between them — and an
//! "accompaniment": a slowly amplitude-modulated chord of fixed sinusoids
//! with gentle rhythmic accents. The voice concentrates energy in sparse,
//! wandering partials while the chord stays low-rank and steady, so a small
//! network can tell them apart from magnitude alone.
//!
//! Per track, both sources draw their pitch class and onset grid from a
//! shared latent with probability `correlation_strength`, making the
//! sources statistically dependent the way instruments in real music are.
//! Mixtures are sample-wise sums; the pools (paired / unlabelled / solo)
//! are built from disjoint tracks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::audio::{self, Waveform, SAMPLE_RATE};
use crate::data::{DataCorpus, MANIFEST_NAME};
use crate::error::{Error, Result};

/// Parameters of a synthetic corpus. The seed fully determines every sample
/// of every track.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub n_paired_tracks: usize,
    pub n_unlabelled_tracks: usize,
    pub n_solo_tracks_per_source: usize,
    pub track_seconds: f64,
    pub seed: u64,
    /// Probability that a source adopts the track's shared pitch class and
    /// onset grid instead of drawing its own, in `[0, 1]`.
    pub correlation_strength: f64,
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paired_tracks < 1
            || self.n_unlabelled_tracks < 1
            || self.n_solo_tracks_per_source < 1
        {
            return Err(Error::Config("toy corpus needs at least one track per pool".into()));
        }
        if !self.track_seconds.is_finite() || self.track_seconds <= 0.0 {
            return Err(Error::Config("track_seconds must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.correlation_strength) {
            return Err(Error::Config("correlation_strength must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Seconds per onset-grid cell.
const CELL_SECONDS: f64 = 0.5;
/// Probability that an onset cell is active.
const CELL_ON_PROB: f64 = 0.7;
/// Number of semitone pitch classes.
const PITCH_CLASSES: usize = 12;
/// Peak amplitude per source; the mixture stays within +-0.7.
const SOURCE_PEAK: f64 = 0.35;

/// Per-track synthesis parameters, exposed so statistical properties of the
/// generator can be checked directly.
#[derive(Clone, Debug)]
pub struct TrackParams {
    pub voice_pitch: usize,
    pub accomp_pitch: usize,
    pub voice_onsets: Vec<bool>,
    pub accomp_onsets: Vec<bool>,
    vibrato_rate: f64,
    vibrato_depth: f64,
    voice_phase: f64,
    am_rate: f64,
    am_phase: f64,
    chord_phases: [f64; 3],
}

/// Draws the parameters of one track. With probability
/// `correlation_strength` a source adopts the shared pitch class, and each
/// of its onset cells likewise adopts the shared grid cell.
pub fn draw_track_params(
    rng: &mut ChaCha20Rng,
    n_cells: usize,
    correlation_strength: f64,
) -> TrackParams {
    let shared_pitch = rng.random_range(0..PITCH_CLASSES);
    let shared_onsets: Vec<bool> = (0..n_cells)
        .map(|_| rng.random_range(0.0..1.0) < CELL_ON_PROB)
        .collect();
    let blend_pitch = |rng: &mut ChaCha20Rng| {
        if rng.random_range(0.0..1.0) < correlation_strength {
            shared_pitch
        } else {
            rng.random_range(0..PITCH_CLASSES)
        }
    };
    let blend_onsets = |rng: &mut ChaCha20Rng| -> Vec<bool> {
        shared_onsets
            .iter()
            .map(|&cell| {
                if rng.random_range(0.0..1.0) < correlation_strength {
                    cell
                } else {
                    rng.random_range(0.0..1.0) < CELL_ON_PROB
                }
            })
            .collect()
    };
    let voice_pitch = blend_pitch(rng);
    let voice_onsets = blend_onsets(rng);
    let accomp_pitch = blend_pitch(rng);
    let accomp_onsets = blend_onsets(rng);
    TrackParams {
        voice_pitch,
        accomp_pitch,
        voice_onsets,
        accomp_onsets,
        vibrato_rate: rng.random_range(4.0..6.0),
        vibrato_depth: rng.random_range(0.01..0.03),
        voice_phase: rng.random_range(0.0..std::f64::consts::TAU),
        am_rate: rng.random_range(0.3..0.8),
        am_phase: rng.random_range(0.0..std::f64::consts::TAU),
        chord_phases: [
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
        ],
    }
}

fn semitones(base: f64, pitch: usize) -> f64 {
    base * (pitch as f64 / 12.0).exp2()
}

/// Smoothed 0/1 envelope over the onset grid: exponential attack/release
/// with a ~20 ms time constant, which keeps excerpt boundaries click-free.
fn onset_envelope(onsets: &[bool], n: usize) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let cell_len = (CELL_SECONDS * sr) as usize;
    let k = 1.0 - (-1.0 / (0.02 * sr)).exp();
    let mut env = Vec::with_capacity(n);
    let mut e = 0.0f64;
    for t in 0..n {
        let cell = (t / cell_len).min(onsets.len() - 1);
        let target = if onsets[cell] { 1.0 } else { 0.0 };
        e += (target - e) * k;
        env.push(e);
    }
    env
}

/// The voice: four harmonics over a vibrato-modulated fundamental, gated by
/// the onset envelope.
fn voice_signal(p: &TrackParams, n: usize) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let f0 = semitones(220.0, p.voice_pitch);
    let env = onset_envelope(&p.voice_onsets, n);
    let harmonics = 4;
    let norm: f64 = (1..=harmonics).map(|h| 1.0 / h as f64).sum();
    let mut phase = p.voice_phase;
    let mut out = Vec::with_capacity(n);
    for (t, &e) in env.iter().enumerate() {
        let vib = 1.0 + p.vibrato_depth
            * (std::f64::consts::TAU * p.vibrato_rate * t as f64 / sr).sin();
        phase += std::f64::consts::TAU * f0 * vib / sr;
        let mut s = 0.0;
        for h in 1..=harmonics {
            s += (phase * h as f64).sin() / h as f64;
        }
        out.push(SOURCE_PEAK * e * s / norm);
    }
    out
}

/// The accompaniment: a fixed major triad an octave below the voice
/// register, slowly amplitude-modulated, with onset-grid accents.
fn accomp_signal(p: &TrackParams, n: usize) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let root = semitones(110.0, p.accomp_pitch);
    let ratios = [1.0, (4.0 / 12.0f64).exp2(), (7.0 / 12.0f64).exp2()];
    let accents = onset_envelope(&p.accomp_onsets, n);
    let mut out = Vec::with_capacity(n);
    for (t, &acc) in accents.iter().enumerate() {
        let time = t as f64 / sr;
        let am = 0.5 * (1.0 + 0.7 * (std::f64::consts::TAU * p.am_rate * time + p.am_phase).sin());
        let accent = 0.6 + 0.4 * acc;
        let mut s = 0.0;
        for (i, r) in ratios.iter().enumerate() {
            s += (std::f64::consts::TAU * root * r * time + p.chord_phases[i]).sin();
        }
        out.push(SOURCE_PEAK * am * accent * s / 3.0);
    }
    out
}

/// One synthesized track: both sources and their sample-wise sum.
pub struct ToyTrack {
    pub params: TrackParams,
    pub sources: Vec<Vec<f64>>,
    pub mixture: Vec<f64>,
}

/// Synthesizes one track of `n` samples.
pub fn synthesize_track(rng: &mut ChaCha20Rng, n: usize, correlation_strength: f64) -> ToyTrack {
    let n_cells = n.div_ceil((CELL_SECONDS * SAMPLE_RATE as f64) as usize).max(1);
    let params = draw_track_params(rng, n_cells, correlation_strength);
    let voice = voice_signal(&params, n);
    let accomp = accomp_signal(&params, n);
    let mixture = voice.iter().zip(&accomp).map(|(a, b)| a + b).collect();
    ToyTrack {
        params,
        sources: vec![voice, accomp],
        mixture,
    }
}

fn write_track_wav(root: &Path, rel: &str, samples: Vec<f64>) -> Result<()> {
    let path = root.join(rel);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    audio::write_wav(
        &path,
        &Waveform {
            samples,
            sample_rate: SAMPLE_RATE,
        },
    )
}

/// Generates a corpus under `root`: WAV files, the manifest, and the loaded
/// [`DataCorpus`]. The corpus is read back through the same path as any
/// user-supplied corpus, so training sees identical data whether it was
/// just generated or loaded later.
pub fn generate_toy_corpus(cfg: &ToyConfig, root: &Path) -> Result<DataCorpus> {
    cfg.validate()?;
    let n = (cfg.track_seconds * SAMPLE_RATE as f64).round() as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut manifest = String::new();

    for i in 0..cfg.n_paired_tracks {
        let track = synthesize_track(&mut rng, n, cfg.correlation_strength);
        let dir = format!("paired/track{i:04}");
        let mix = format!("{dir}/mixture.wav");
        write_track_wav(root, &mix, track.mixture)?;
        let _ = writeln!(manifest, "paired,-,{mix}");
        for (k, source) in track.sources.into_iter().enumerate() {
            let rel = format!("{dir}/source{}.wav", k + 1);
            write_track_wav(root, &rel, source)?;
            let _ = writeln!(manifest, "paired,{},{rel}", k + 1);
        }
    }
    for i in 0..cfg.n_unlabelled_tracks {
        let track = synthesize_track(&mut rng, n, cfg.correlation_strength);
        let rel = format!("unlabelled/track{i:04}/mixture.wav");
        write_track_wav(root, &rel, track.mixture)?;
        let _ = writeln!(manifest, "unlabelled,-,{rel}");
    }
    for k in 0..2 {
        for i in 0..cfg.n_solo_tracks_per_source {
            let mut track = synthesize_track(&mut rng, n, cfg.correlation_strength);
            let rel = format!("solo{}/track{i:04}/source{}.wav", k + 1, k + 1);
            write_track_wav(root, &rel, std::mem::take(&mut track.sources[k]))?;
            let _ = writeln!(manifest, "solo,{},{rel}", k + 1);
        }
    }

    let manifest_path = root.join(MANIFEST_NAME);
    std::fs::write(&manifest_path, &manifest).map_err(|e| Error::io(&manifest_path, e))?;
    DataCorpus::load(root, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_cfg(seed: u64) -> ToyConfig {
        ToyConfig {
            n_paired_tracks: 2,
            n_unlabelled_tracks: 2,
            n_solo_tracks_per_source: 1,
            track_seconds: 1.0,
            seed,
            correlation_strength: 0.5,
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = small_cfg(0);
        cfg.n_paired_tracks = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg(0);
        cfg.track_seconds = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg(0);
        cfg.correlation_strength = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mixture_is_the_exact_sample_wise_sum() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let track = synthesize_track(&mut rng, 8000, 0.5);
        for i in 0..track.mixture.len() {
            assert_eq!(
                track.mixture[i],
                track.sources[0][i] + track.sources[1][i]
            );
        }
        assert!(track.mixture.iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn same_seed_writes_identical_bytes() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        generate_toy_corpus(&small_cfg(11), d1.path()).unwrap();
        generate_toy_corpus(&small_cfg(11), d2.path()).unwrap();
        let manifest = std::fs::read(d1.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(
            manifest,
            std::fs::read(d2.path().join(MANIFEST_NAME)).unwrap()
        );
        for line in String::from_utf8(manifest).unwrap().lines() {
            let rel = line.rsplit(',').next().unwrap();
            let a = std::fs::read(d1.path().join(rel)).unwrap();
            let b = std::fs::read(d2.path().join(rel)).unwrap();
            assert_eq!(a, b, "{rel} differs between same-seed runs");
        }
    }

    #[test]
    fn zero_correlation_decouples_pitch_classes() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let n = 500;
        let mut voice = Vec::with_capacity(n);
        let mut accomp = Vec::with_capacity(n);
        for _ in 0..n {
            let p = draw_track_params(&mut rng, 4, 0.0);
            voice.push(p.voice_pitch as f64);
            accomp.push(p.accomp_pitch as f64);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mv = mean(&voice);
        let ma = mean(&accomp);
        let cov: f64 = voice
            .iter()
            .zip(&accomp)
            .map(|(a, b)| (a - mv) * (b - ma))
            .sum::<f64>();
        let sv: f64 = voice.iter().map(|a| (a - mv) * (a - mv)).sum::<f64>().sqrt();
        let sa: f64 = accomp.iter().map(|a| (a - ma) * (a - ma)).sum::<f64>().sqrt();
        let corr = cov / (sv * sa);
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "correlation {corr}");
    }

    #[test]
    fn full_correlation_locks_the_latents_together() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        for _ in 0..50 {
            let p = draw_track_params(&mut rng, 4, 1.0);
            assert_eq!(p.voice_pitch, p.accomp_pitch);
            assert_eq!(p.voice_onsets, p.accomp_onsets);
        }
    }

    #[test]
    fn generated_corpus_loads_with_expected_pools() {
        let dir = tempdir().unwrap();
        let cfg = small_cfg(3);
        let corpus = generate_toy_corpus(&cfg, dir.path()).unwrap();
        assert_eq!(corpus.sources, 2);
        assert_eq!(corpus.paired.len(), 2);
        assert_eq!(corpus.unlabelled.len(), 2);
        assert_eq!(corpus.solo[0].len(), 1);
        assert_eq!(corpus.solo[1].len(), 1);
        for track in &corpus.paired {
            assert_eq!(track.sources.len(), 2);
            assert_eq!(track.mixture.ncols(), crate::audio::N_BINS);
            assert!(track.mixture.nrows() > 0);
            for s in &track.sources {
                assert_eq!(s.dim(), track.mixture.dim());
            }
        }
        // Manifest line count: paired tracks contribute K+1 lines.
        let manifest = std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(manifest.lines().count(), 2 * 3 + 2 + 2);
        // No path appears twice (pools are disjoint by construction).
        let mut paths: Vec<&str> = manifest
            .lines()
            .map(|l| l.rsplit(',').next().unwrap())
            .collect();
        paths.sort_unstable();
        paths.dedup();
        assert_eq!(paths.len(), manifest.lines().count());
    }

    #[test]
    fn quantized_stems_still_sum_to_the_mixture() {
        let dir = tempdir().unwrap();
        generate_toy_corpus(&small_cfg(9), dir.path()).unwrap();
        let mix = audio::ingest(&dir.path().join("paired/track0000/mixture.wav")).unwrap();
        let s1 = audio::ingest(&dir.path().join("paired/track0000/source1.wav")).unwrap();
        let s2 = audio::ingest(&dir.path().join("paired/track0000/source2.wav")).unwrap();
        let mut worst = 0.0f64;
        for i in 0..mix.samples.len() {
            worst = worst.max((mix.samples[i] - s1.samples[i] - s2.samples[i]).abs());
        }
        // Each of the three WAVs rounds independently to 16 bits.
        assert!(worst <= 1.5 / 32768.0, "worst additivity error {worst}");
    }
}
