//! C interface to the separator: load a training checkpoint, separate mono
//! audio into per-source estimates, and score estimates against references.
//!
//! Every call returns a [`StemsepStatus`]; on failure the message behind it
//! is kept per thread and read back with [`stemsep_last_error`]. Handles
//! are opaque and freed by their matching `_free` function. The generated
//! header lands in `include/stemsep.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use stemsep::audio::{resample, Waveform, SAMPLE_RATE};
use stemsep::evaluation::{decompose, sdr_sir_sar, separate_track};
use stemsep::separator::SeparatorModel;
use stemsep::training::load_state;
use stemsep::Error;

/// Outcome of a call into this library.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StemsepStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument value was out of range or inconsistent.
    InvalidArgument = 2,
    /// Reading or decoding a file failed.
    IoError = 3,
    /// The computation failed; see stemsep_last_error().
    RuntimeError = 4,
}

/// A separator loaded from a training checkpoint. Create with
/// stemsep_separator_load(), destroy with stemsep_separator_free().
pub struct StemsepSeparator {
    model: SeparatorModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let owned = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = owned);
}

fn status_of(err: &Error) -> StemsepStatus {
    match err {
        Error::Io { .. } | Error::Wav { .. } | Error::Checkpoint(_) => StemsepStatus::IoError,
        _ => StemsepStatus::RuntimeError,
    }
}

/// Runs a fallible body, routing its message into the thread's last-error
/// slot and its panic (should one escape) into a runtime status.
fn guarded<F>(f: F) -> StemsepStatus
where
    F: FnOnce() -> Result<(), (StemsepStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            StemsepStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            StemsepStatus::RuntimeError
        }
    }
}

fn null_arg(name: &str) -> (StemsepStatus, String) {
    (StemsepStatus::NullArgument, format!("{name} is null"))
}

/// Message of the calling thread's most recent failure, or an empty string
/// after a success. The pointer stays valid until this thread's next call
/// into the library.
#[no_mangle]
pub extern "C" fn stemsep_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads the separator stored in a training checkpoint.
///
/// # Safety
/// `checkpoint_path` must be a NUL-terminated UTF-8 path and `out` a valid
/// destination pointer.
#[no_mangle]
pub unsafe extern "C" fn stemsep_separator_load(
    checkpoint_path: *const c_char,
    out: *mut *mut StemsepSeparator,
) -> StemsepStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null_arg("out"));
        }
        if checkpoint_path.is_null() {
            return Err(null_arg("checkpoint_path"));
        }
        let path = CStr::from_ptr(checkpoint_path)
            .to_str()
            .map_err(|_| (StemsepStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let state =
            load_state(Path::new(path)).map_err(|e| (status_of(&e), e.to_string()))?;
        *out = Box::into_raw(Box::new(StemsepSeparator {
            model: state.separator,
        }));
        Ok(())
    })
}

/// Frees a separator. A null handle is a no-op.
///
/// # Safety
/// `sep` must be null or a handle from stemsep_separator_load() that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn stemsep_separator_free(sep: *mut StemsepSeparator) {
    if !sep.is_null() {
        drop(Box::from_raw(sep));
    }
}

/// Number of sources the separator estimates, or 0 for a null handle.
///
/// # Safety
/// `sep` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stemsep_separator_sources(sep: *const StemsepSeparator) -> usize {
    if sep.is_null() {
        0
    } else {
        (*sep).model.spec.sources
    }
}

/// Separates a mono waveform into one estimate per source.
///
/// `samples` holds `n_samples` mono samples in [-1, 1] at `sample_rate`
/// Hz; internally the audio is processed at 8 kHz and the estimates are
/// returned at the input's rate. `out` must hold
/// `stemsep_separator_sources(sep) * n_samples` doubles; estimate `k` is
/// written to `out[k * n_samples .. (k + 1) * n_samples]`. The input must
/// cover at least one STFT frame (512 samples at 8 kHz).
///
/// # Safety
/// `sep` must be a live handle and the buffers must match the sizes above.
#[no_mangle]
pub unsafe extern "C" fn stemsep_separate(
    sep: *const StemsepSeparator,
    samples: *const f64,
    n_samples: usize,
    sample_rate: u32,
    out: *mut f64,
) -> StemsepStatus {
    guarded(|| {
        if sep.is_null() {
            return Err(null_arg("sep"));
        }
        if samples.is_null() {
            return Err(null_arg("samples"));
        }
        if out.is_null() {
            return Err(null_arg("out"));
        }
        if n_samples == 0 || sample_rate == 0 {
            return Err((
                StemsepStatus::InvalidArgument,
                "n_samples and sample_rate must be positive".into(),
            ));
        }
        let model = &(*sep).model;
        let input = Waveform {
            samples: std::slice::from_raw_parts(samples, n_samples).to_vec(),
            sample_rate,
        };
        let mixture = resample(&input, SAMPLE_RATE);
        let estimates =
            separate_track(model, &mixture).map_err(|e| (status_of(&e), e.to_string()))?;
        let out = std::slice::from_raw_parts_mut(out, estimates.len() * n_samples);
        for (k, estimate) in estimates.iter().enumerate() {
            let mut wave = resample(estimate, sample_rate);
            wave.samples.resize(n_samples, 0.0);
            out[k * n_samples..(k + 1) * n_samples].copy_from_slice(&wave.samples);
        }
        Ok(())
    })
}

/// Projection-based separation metrics of one estimate.
///
/// `references` points at `n_sources` arrays of `n_samples` doubles — the
/// true sources — and `target` selects the one the estimate approximates.
/// SDR, SIR and SAR are written in decibels; a distortion-free axis comes
/// out as infinity.
///
/// # Safety
/// All arrays must match the stated sizes; the three outputs must be valid
/// destination pointers.
#[no_mangle]
pub unsafe extern "C" fn stemsep_bss_metrics(
    estimate: *const f64,
    n_samples: usize,
    references: *const *const f64,
    n_sources: usize,
    target: usize,
    sdr_out: *mut f64,
    sir_out: *mut f64,
    sar_out: *mut f64,
) -> StemsepStatus {
    guarded(|| {
        if estimate.is_null() {
            return Err(null_arg("estimate"));
        }
        if references.is_null() {
            return Err(null_arg("references"));
        }
        if sdr_out.is_null() || sir_out.is_null() || sar_out.is_null() {
            return Err(null_arg("metric output"));
        }
        if n_samples == 0 || n_sources == 0 || target >= n_sources {
            return Err((
                StemsepStatus::InvalidArgument,
                format!("need n_samples > 0 and target < n_sources, got {n_samples}/{target}/{n_sources}"),
            ));
        }
        let refs_ptrs = std::slice::from_raw_parts(references, n_sources);
        if refs_ptrs.iter().any(|p| p.is_null()) {
            return Err(null_arg("references[k]"));
        }
        let refs: Vec<&[f64]> = refs_ptrs
            .iter()
            .map(|&p| std::slice::from_raw_parts(p, n_samples))
            .collect();
        let est = std::slice::from_raw_parts(estimate, n_samples);
        let d = decompose(est, &refs, target).map_err(|e| (status_of(&e), e.to_string()))?;
        let m = sdr_sir_sar(&d);
        *sdr_out = m.sdr;
        *sir_out = m.sir;
        *sar_out = m.sar;
        Ok(())
    })
}
