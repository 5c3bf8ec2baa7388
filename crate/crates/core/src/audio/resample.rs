//! Windowed-sinc resampling.

use crate::audio::Waveform;

/// Taps on each side of the interpolation kernel (64 taps total).
const HALF_TAPS: isize = 32;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

/// Blackman window on `[-1, 1]`.
fn blackman(t: f64) -> f64 {
    if t.abs() > 1.0 {
        return 0.0;
    }
    let u = std::f64::consts::PI * (t + 1.0);
    0.42 - 0.5 * u.cos() + 0.08 * (2.0 * u).cos()
}

/// Resamples with a 64-tap Blackman-windowed sinc kernel. The cutoff sits at
/// 90% of the narrower Nyquist band, and each output sample is normalized by
/// its kernel sum so constant signals pass through at unit gain. Returns the
/// input unchanged when the rates already match.
pub fn resample(wave: &Waveform, target_rate: u32) -> Waveform {
    if wave.sample_rate == target_rate {
        return wave.clone();
    }
    let ratio = f64::from(target_rate) / f64::from(wave.sample_rate);
    let cutoff = 0.45 * ratio.min(1.0); // cycles per input sample
    let n_in = wave.samples.len() as isize;
    let n_out = (wave.samples.len() as f64 * ratio).round() as usize;
    let mut out = Vec::with_capacity(n_out);
    for m in 0..n_out {
        let center = m as f64 / ratio;
        let k0 = center.floor() as isize - HALF_TAPS + 1;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for k in k0..k0 + 2 * HALF_TAPS {
            let t = center - k as f64;
            let h = 2.0 * cutoff * sinc(2.0 * cutoff * t) * blackman(t / HALF_TAPS as f64);
            norm += h;
            if k >= 0 && k < n_in {
                acc += wave.samples[k as usize] * h;
            }
        }
        out.push(if norm.abs() > 1e-12 { (acc / norm).clamp(-1.0, 1.0) } else { 0.0 });
    }
    Waveform {
        samples: out,
        sample_rate: target_rate,
    }
}
