#ifndef STEMSEP_H
#define STEMSEP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call into this library.
 */
typedef enum StemsepStatus {
  /**
   * The call succeeded.
   */
  STEMSEP_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  STEMSEP_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument value was out of range or inconsistent.
   */
  STEMSEP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Reading or decoding a file failed.
   */
  STEMSEP_STATUS_IO_ERROR = 3,
  /**
   * The computation failed; see stemsep_last_error().
   */
  STEMSEP_STATUS_RUNTIME_ERROR = 4,
} StemsepStatus;

/**
 * A separator loaded from a training checkpoint. Create with
 * stemsep_separator_load(), destroy with stemsep_separator_free().
 */
typedef struct StemsepSeparator StemsepSeparator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the calling thread's most recent failure, or an empty string
 * after a success. The pointer stays valid until this thread's next call
 * into the library.
 */
const char *stemsep_last_error(void);

/**
 * Loads the separator stored in a training checkpoint.
 *
 * # Safety
 * `checkpoint_path` must be a NUL-terminated UTF-8 path and `out` a valid
 * destination pointer.
 */
enum StemsepStatus stemsep_separator_load(const char *checkpoint_path,
                                          struct StemsepSeparator **out);

/**
 * Frees a separator. A null handle is a no-op.
 *
 * # Safety
 * `sep` must be null or a handle from stemsep_separator_load() that has
 * not been freed yet.
 */
void stemsep_separator_free(struct StemsepSeparator *sep);

/**
 * Number of sources the separator estimates, or 0 for a null handle.
 *
 * # Safety
 * `sep` must be null or a live handle.
 */
size_t stemsep_separator_sources(const struct StemsepSeparator *sep);

/**
 * Separates a mono waveform into one estimate per source.
 *
 * `samples` holds `n_samples` mono samples in [-1, 1] at `sample_rate`
 * Hz; internally the audio is processed at 8 kHz and the estimates are
 * returned at the input's rate. `out` must hold
 * `stemsep_separator_sources(sep) * n_samples` doubles; estimate `k` is
 * written to `out[k * n_samples .. (k + 1) * n_samples]`. The input must
 * cover at least one STFT frame (512 samples at 8 kHz).
 *
 * # Safety
 * `sep` must be a live handle and the buffers must match the sizes above.
 */
enum StemsepStatus stemsep_separate(const struct StemsepSeparator *sep,
                                    const double *samples,
                                    size_t n_samples,
                                    uint32_t sample_rate,
                                    double *out);

/**
 * Projection-based separation metrics of one estimate.
 *
 * `references` points at `n_sources` arrays of `n_samples` doubles — the
 * true sources — and `target` selects the one the estimate approximates.
 * SDR, SIR and SAR are written in decibels; a distortion-free axis comes
 * out as infinity.
 *
 * # Safety
 * All arrays must match the stated sizes; the three outputs must be valid
 * destination pointers.
 */
enum StemsepStatus stemsep_bss_metrics(const double *estimate,
                                       size_t n_samples,
                                       const double *const *references,
                                       size_t n_sources,
                                       size_t target,
                                       double *sdr_out,
                                       double *sir_out,
                                       double *sar_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEMSEP_H */
