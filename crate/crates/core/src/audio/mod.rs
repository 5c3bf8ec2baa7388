//! Audio front end: ingest, spectrograms, excerpt cutting, reconstruction.
//!
//! The whole pipeline runs at a fixed 8 kHz mono format with 512-point FFT
//! frames hopped by 256 samples (257 bins). Magnitudes are compressed with
//! `log(1 + x)` before they reach a model and expanded with `exp(x) - 1` on
//! the way back.

mod resample;
mod stft;
mod wav;

pub use resample::resample;
pub use stft::{frame_count, istft, stft};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};
use ndarray::Array2;
use num_complex::Complex;
use std::path::Path;

/// Canonical processing rate.
pub const SAMPLE_RATE: u32 = 8000;
/// FFT length per analysis frame.
pub const FFT_SIZE: usize = 512;
/// Hop between frames (50% overlap).
pub const HOP: usize = 256;
/// Number of non-redundant FFT bins (`FFT_SIZE / 2 + 1`).
pub const N_BINS: usize = FFT_SIZE / 2 + 1;

/// Mono waveform with its sample rate.
#[derive(Clone, Debug)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Complex STFT frames, `[n_frames, N_BINS]`.
#[derive(Clone)]
pub struct ComplexSpectrogram {
    pub frames: Array2<Complex<f64>>,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    /// Linear magnitudes, `[n_frames, N_BINS]`.
    pub fn magnitude(&self) -> Array2<f64> {
        self.frames.mapv(|c| c.norm())
    }
}

/// Reads a WAV file of any rate/channel layout and returns mono samples at
/// [`SAMPLE_RATE`] in `[-1, 1]`.
pub fn ingest(path: &Path) -> Result<Waveform> {
    let wave = read_wav(path)?;
    Ok(resample(&wave, SAMPLE_RATE))
}

/// Compresses non-negative linear magnitudes with `log(1 + x)`.
pub fn log_normalize(mag: &Array2<f64>) -> Result<Array2<f64>> {
    if let Some(v) = mag.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Audio(format!(
            "log_normalize expects finite non-negative magnitudes, found {v}"
        )));
    }
    Ok(mag.mapv(f64::ln_1p))
}

/// Inverse of [`log_normalize`]. Small negative inputs (e.g. numerical noise
/// around a rectified zero) clamp to zero magnitude.
pub fn denormalize(log_mag: &Array2<f64>) -> Array2<f64> {
    log_mag.mapv(|v| v.exp_m1().max(0.0))
}

/// Applies a loudness factor in the linear-magnitude domain.
pub fn loudness_scale(mag: &Array2<f64>, factor: f64) -> Array2<f64> {
    mag.mapv(|v| factor * v)
}

/// Window sizes the separator consumes and produces, together with the
/// alignment between them. Values come from the separator's layer-shape
/// walkthrough; this struct only carries the numbers.
#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ExcerptGeometry {
    /// Frames per input window.
    pub input_frames: usize,
    /// Bins per input window (real bins zero-padded upwards).
    pub input_bins: usize,
    /// Frames per output window.
    pub out_frames: usize,
    /// Bins per output window.
    pub out_bins: usize,
    /// Frames trimmed from each side of the input window: output frame `t`
    /// of a window starting at input frame `s` covers track frame
    /// `s + time_margin + t`.
    pub time_margin: usize,
}

impl ExcerptGeometry {
    /// First track frame covered by the output window of an input window
    /// starting at `start`.
    pub fn target_start(&self, start: isize) -> isize {
        start + self.time_margin as isize
    }
}

/// Cuts the model input window from a `[n_frames, N_BINS]` grid: frames
/// `start .. start + input_frames` (zero-padded where they fall outside the
/// track) and the real bins placed at indices `0..N_BINS` of the padded
/// `input_bins` axis, zeros above.
pub fn cut_input_window(grid: &Array2<f64>, geom: &ExcerptGeometry, start: isize) -> Array2<f64> {
    let bins = grid.ncols();
    assert!(
        bins <= geom.input_bins,
        "grid has {bins} bins but the input window only holds {}",
        geom.input_bins
    );
    let n = grid.nrows() as isize;
    let mut out = Array2::<f64>::zeros((geom.input_frames, geom.input_bins));
    for t in 0..geom.input_frames as isize {
        let src = start + t;
        if src >= 0 && src < n {
            out.row_mut(t as usize)
                .slice_mut(ndarray::s![..bins])
                .assign(&grid.row(src as usize));
        }
    }
    out
}

/// Cuts the target window aligned with [`cut_input_window`]: frames
/// `start + time_margin ..` for `out_frames`, bins `0..out_bins`.
pub fn cut_target_window(grid: &Array2<f64>, geom: &ExcerptGeometry, start: isize) -> Array2<f64> {
    let n = grid.nrows() as isize;
    let t0 = geom.target_start(start);
    let mut out = Array2::<f64>::zeros((geom.out_frames, geom.out_bins));
    for t in 0..geom.out_frames as isize {
        let src = t0 + t;
        if src >= 0 && src < n {
            out.row_mut(t as usize)
                .assign(&grid.row(src as usize).slice(ndarray::s![..geom.out_bins]));
        }
    }
    out
}

/// Rebuilds a waveform from an estimated log-magnitude grid using the
/// mixture's phase. `est_log` must cover all mixture frames but may omit the
/// topmost bins (the separator predicts bins `0..out_bins`); missing bins are
/// passed through from the mixture unchanged, magnitude and phase alike.
pub fn reconstruct(
    est_log: &Array2<f64>,
    mixture: &ComplexSpectrogram,
    n_samples: usize,
) -> Result<Waveform> {
    let n_frames = mixture.frames.nrows();
    if est_log.nrows() != n_frames {
        return Err(Error::Audio(format!(
            "estimate covers {} frames but the mixture has {n_frames}",
            est_log.nrows()
        )));
    }
    let est_bins = est_log.ncols();
    if est_bins > N_BINS {
        return Err(Error::Audio(format!(
            "estimate has {est_bins} bins, more than the {N_BINS} available"
        )));
    }
    let mag = denormalize(est_log);
    let mut frames = mixture.frames.clone();
    for t in 0..n_frames {
        for k in 0..est_bins {
            let mix = mixture.frames[(t, k)];
            let m = mix.norm();
            frames[(t, k)] = if m > 0.0 {
                mix * (mag[(t, k)] / m)
            } else {
                Complex::new(mag[(t, k)], 0.0)
            };
        }
    }
    let mut wave = istft(&ComplexSpectrogram {
        frames,
        sample_rate: mixture.sample_rate,
    })?;
    wave.samples.resize(n_samples, 0.0);
    Ok(wave)
}
