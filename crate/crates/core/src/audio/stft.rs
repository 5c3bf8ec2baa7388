//! Short-time Fourier transform with a periodic Hann window.
//!
//! Analysis is centred: the signal is implicitly zero-padded by half a
//! window on each side, so frame `m` is centred on sample `m * HOP` and
//! every real sample is covered by overlapping windows. Synthesis is the
//! least-squares overlap-add (inverse FFTs weighted by the synthesis window
//! and normalized by the accumulated squared window), which reproduces
//! consistent spectrograms exactly and keeps modified ones — estimates
//! resynthesised with a foreign phase — bounded instead of amplifying their
//! unwindowed frame edges.

use crate::audio::{ComplexSpectrogram, Waveform, FFT_SIZE, HOP, N_BINS};
use crate::error::{Error, Result};
use ndarray::Array2;
use num_complex::Complex;
use realfft::RealFftPlanner;

/// Half a window: the implicit zero padding on each side of the signal.
const PAD: usize = FFT_SIZE / 2;

/// Periodic Hann window of length [`FFT_SIZE`].
fn hann() -> Vec<f64> {
    (0..FFT_SIZE)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / FFT_SIZE as f64).cos()))
        .collect()
}

/// Number of analysis frames for a signal of `len` samples.
pub fn frame_count(len: usize) -> Result<usize> {
    if len < FFT_SIZE {
        return Err(Error::Audio(format!(
            "input of {len} samples is shorter than one {FFT_SIZE}-sample frame"
        )));
    }
    Ok(1 + len / HOP)
}

/// Forward STFT: `[n_frames, N_BINS]` complex frames, unnormalized FFT.
pub fn stft(wave: &Waveform) -> Result<ComplexSpectrogram> {
    let n_frames = frame_count(wave.samples.len())?;
    let window = hann();
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(FFT_SIZE);
    let mut frames = Array2::<Complex<f64>>::zeros((n_frames, N_BINS));
    let mut buf = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    for m in 0..n_frames {
        for (n, slot) in buf.iter_mut().enumerate() {
            let padded = m * HOP + n;
            *slot = if padded >= PAD && padded - PAD < wave.samples.len() {
                wave.samples[padded - PAD] * window[n]
            } else {
                0.0
            };
        }
        fft.process(&mut buf, &mut spectrum)
            .map_err(|e| Error::Audio(format!("fft failed: {e}")))?;
        for (k, slot) in spectrum.iter().enumerate() {
            frames[(m, k)] = *slot;
        }
    }
    Ok(ComplexSpectrogram {
        frames,
        sample_rate: wave.sample_rate,
    })
}

/// Inverse STFT by least-squares overlap-add. The nominal output length is
/// `(n_frames - 1) * HOP`; a trailing sub-hop remainder of the original
/// signal is not representable and is left to the caller's final resize.
pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform> {
    let n_frames = spec.frames.nrows();
    if n_frames == 0 {
        return Err(Error::Audio("istft on empty spectrogram".into()));
    }
    let len = (n_frames - 1) * HOP;
    let window = hann();
    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(FFT_SIZE);
    let mut num = vec![0.0f64; len];
    let mut den = vec![0.0f64; len];
    let mut spectrum = ifft.make_input_vec();
    let mut buf = ifft.make_output_vec();
    for m in 0..n_frames {
        for (k, slot) in spectrum.iter_mut().enumerate() {
            *slot = spec.frames[(m, k)];
        }
        ifft.process(&mut spectrum, &mut buf)
            .map_err(|e| Error::Audio(format!("inverse fft failed: {e}")))?;
        for n in 0..FFT_SIZE {
            let padded = m * HOP + n;
            if padded >= PAD && padded - PAD < len {
                num[padded - PAD] += window[n] * buf[n] / FFT_SIZE as f64;
                den[padded - PAD] += window[n] * window[n];
            }
        }
    }
    for (y, &w) in num.iter_mut().zip(den.iter()) {
        if w > 1e-8 {
            *y /= w;
        } else {
            *y = 0.0;
        }
    }
    Ok(Waveform {
        samples: num,
        sample_rate: spec.sample_rate,
    })
}
