#ifndef RESOKIT_H
#define RESOKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ResokitStatus {
  RESOKIT_STATUS_OK = 0,
  RESOKIT_STATUS_NULL_POINTER = 1,
  RESOKIT_STATUS_INVALID_ARGUMENT = 2,
  RESOKIT_STATUS_PARSE = 3,
  RESOKIT_STATUS_NO_RESONANCE = 4,
  RESOKIT_STATUS_NON_CONVERGENCE = 5,
  RESOKIT_STATUS_UNPHYSICAL = 6,
  RESOKIT_STATUS_PANIC = 7,
} ResokitStatus;

typedef enum ResokitMode {
  RESOKIT_MODE_QUARTER_WAVE = 0,
  RESOKIT_MODE_HALF_WAVE = 1,
} ResokitMode;

/**
 * Opaque notch fit result.
 */
typedef struct ResokitFit ResokitFit;

/**
 * Opaque S21 trace.
 */
typedef struct ResokitTrace ResokitTrace;

/**
 * CPW cross-section and length, SI units. A substrate thickness of zero
 * or less means semi-infinite.
 */
typedef struct ResokitCpwGeometry {
  double width;
  double gap;
  double film_thickness;
  double substrate_epsilon_r;
  double substrate_thickness;
  double resonator_length;
  enum ResokitMode mode;
} ResokitCpwGeometry;

typedef struct ResokitLineParams {
  double l_geo;
  double c_geo;
  double l_kin;
  double impedance;
  double phase_velocity;
  double alpha_kinetic;
} ResokitLineParams;

typedef struct ResokitNotchParams {
  double f_r;
  double q_loaded;
  double q_coupling_mag;
  double phi;
  double amp;
  double phase_offset;
  double delay;
} ResokitNotchParams;

typedef struct ResokitTlsParams {
  double q_tls0;
  double n_c;
  double beta;
} ResokitTlsParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * successful call. The pointer stays valid until the next call into the
 * library on the same thread.
 */
const char *resokit_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *resokit_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from a resokit function documented as returning an owned
 * string, and must not be used afterwards.
 */
void resokit_string_free(char *s);

/**
 * Line parameters of a CPW from conformal mapping.
 *
 * # Safety
 * `geometry` and `out` must be valid pointers.
 */
enum ResokitStatus resokit_cpw_line_params(const struct ResokitCpwGeometry *geometry,
                                           double l_kin,
                                           struct ResokitLineParams *out);

/**
 * Frequency of mode `n` (1-based) of the resonator described by `geometry`.
 *
 * # Safety
 * `geometry` and `out_hz` must be valid pointers.
 */
enum ResokitStatus resokit_cpw_resonance_frequency(const struct ResokitCpwGeometry *geometry,
                                                   double l_kin,
                                                   uint32_t n,
                                                   double *out_hz);

/**
 * Notch-model transmission including the cable environment.
 *
 * # Safety
 * `params`, `out_re` and `out_im` must be valid pointers.
 */
enum ResokitStatus resokit_s21(double f,
                               const struct ResokitNotchParams *params,
                               double *out_re,
                               double *out_im);

/**
 * `Q_i` from loaded and coupling quality factors and the mismatch angle.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ResokitStatus resokit_extract_qi(double q_loaded,
                                      double q_coupling_mag,
                                      double phi,
                                      double *out);

/**
 * Mean photon number from on-chip power in watts.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ResokitStatus resokit_photon_number(double p_in_watts,
                                         double f_r,
                                         double q_i,
                                         double q_c,
                                         double q_l,
                                         double *out);

/**
 * TLS loss at temperature `temperature_k` and photon number `n_ph`.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum ResokitStatus resokit_tls_loss(double temperature_k,
                                    double n_ph,
                                    double f_r,
                                    const struct ResokitTlsParams *params,
                                    double *out);

/**
 * Vortex entry fields `B_a` and `B_c1` in tesla for a film of the given
 * thickness in metres.
 *
 * # Safety
 * `out_b_a` and `out_b_c1` must be valid pointers.
 */
enum ResokitStatus resokit_vortex_thresholds(double thickness, double *out_b_a, double *out_b_c1);

/**
 * Builds a trace from parallel arrays of frequency (Hz, strictly
 * increasing) and real and imaginary S21.
 *
 * # Safety
 * The three arrays must hold `len` elements; `out` must be valid.
 */
enum ResokitStatus resokit_trace_from_arrays(const double *freqs,
                                             const double *re,
                                             const double *im,
                                             size_t len,
                                             struct ResokitTrace **out);

/**
 * Parses Touchstone v1 two-port bytes.
 *
 * # Safety
 * `bytes` must hold `len` bytes; `out` must be valid.
 */
enum ResokitStatus resokit_trace_parse_touchstone(const uint8_t *bytes,
                                                  size_t len,
                                                  struct ResokitTrace **out);

/**
 * Parses a three-column CSV trace.
 *
 * # Safety
 * `bytes` must hold `len` bytes; `out` must be valid.
 */
enum ResokitStatus resokit_trace_parse_csv(const uint8_t *bytes,
                                           size_t len,
                                           struct ResokitTrace **out);

/**
 * Number of points of a trace, 0 for null.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t resokit_trace_len(const struct ResokitTrace *trace);

/**
 * Copies up to `cap` points into the caller's arrays and stores the
 * number copied in `out_written`.
 *
 * # Safety
 * Each array must have room for `cap` elements.
 */
enum ResokitStatus resokit_trace_copy(const struct ResokitTrace *trace,
                                      double *freqs,
                                      double *re,
                                      double *im,
                                      size_t cap,
                                      size_t *out_written);

/**
 * # Safety
 * `trace` must be null or a handle not yet freed.
 */
void resokit_trace_free(struct ResokitTrace *trace);

/**
 * Fits the notch model to a trace.
 *
 * # Safety
 * `trace` must be a live handle; `out` must be valid.
 */
enum ResokitStatus resokit_fit_notch(const struct ResokitTrace *trace, struct ResokitFit **out);

/**
 * Fitted parameters and their one-sigma uncertainties. Either output may
 * be null.
 *
 * # Safety
 * `fit` must be a live handle.
 */
enum ResokitStatus resokit_fit_params(const struct ResokitFit *fit,
                                      struct ResokitNotchParams *params,
                                      struct ResokitNotchParams *sigma);

/**
 * Internal quality factor and its uncertainty. `sigma` may be null.
 *
 * # Safety
 * `fit` and `q_internal` must be valid.
 */
enum ResokitStatus resokit_fit_q_internal(const struct ResokitFit *fit,
                                          double *q_internal,
                                          double *sigma);

/**
 * Canonical JSON of the fit. Release with [`resokit_string_free`].
 *
 * # Safety
 * `fit` and `out` must be valid.
 */
enum ResokitStatus resokit_fit_to_json(const struct ResokitFit *fit, char **out);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void resokit_fit_free(struct ResokitFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESOKIT_H */
