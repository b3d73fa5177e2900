#ifndef ATTNSEP_H
#define ATTNSEP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AttnsepFamily {
  ATTNSEP_FAMILY_TOY = 0,
  ATTNSEP_FAMILY_SELF_IDENTITY = 1,
  ATTNSEP_FAMILY_SELF_ALLONES = 2,
  ATTNSEP_FAMILY_CROSS = 3,
} AttnsepFamily;

typedef enum AttnsepStatus {
  ATTNSEP_STATUS_OK = 0,
  ATTNSEP_STATUS_NULL_POINTER = 1,
  ATTNSEP_STATUS_INVALID_ARGUMENT = 2,
  ATTNSEP_STATUS_INVALID_CONFIG = 3,
  ATTNSEP_STATUS_SHAPE = 4,
  ATTNSEP_STATUS_NUMERIC = 5,
  ATTNSEP_STATUS_IO = 6,
  ATTNSEP_STATUS_PANIC = 7,
} AttnsepStatus;

// Opaque sweep outcome.
typedef struct AttnsepSweepResult AttnsepSweepResult;

// Opaque sweep description.
typedef struct AttnsepSweepSpec AttnsepSweepSpec;

// One aggregated sweep point.
typedef struct AttnsepSweepRow {
  double swept_value;
  uint64_t trials;
  uint64_t successes;
  double ratio;
  uint64_t fail_exp_d1;
  uint64_t fail_lin_d1;
  uint64_t fail_exp_d0;
  uint64_t fail_lin_d0;
  uint64_t seed;
} AttnsepSweepRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next call into this library on the same thread.
const char *attnsep_last_error_message(void);

// Creates a sweep over `param` (e.g. "n", "a1") with the family's defaults.
//
// # Safety
// `param` must be a NUL-terminated string, `values` must point to `len`
// doubles, and `out` must be writable.
enum AttnsepStatus attnsep_sweep_spec_new(enum AttnsepFamily family,
                                          const char *param,
                                          const double *values,
                                          size_t len,
                                          struct AttnsepSweepSpec **out);

// Overrides one fixed parameter of the sweep.
//
// # Safety
// `spec` must come from `attnsep_sweep_spec_new`; `param` must be a
// NUL-terminated string.
enum AttnsepStatus attnsep_sweep_spec_set(struct AttnsepSweepSpec *spec,
                                          const char *param,
                                          double value);

// # Safety
// `spec` must come from `attnsep_sweep_spec_new`.
enum AttnsepStatus attnsep_sweep_spec_set_trials(struct AttnsepSweepSpec *spec, uint64_t trials);

// # Safety
// `spec` must come from `attnsep_sweep_spec_new`.
enum AttnsepStatus attnsep_sweep_spec_set_seed(struct AttnsepSweepSpec *spec, uint64_t seed);

// # Safety
// `spec` must come from `attnsep_sweep_spec_new` or be NULL.
void attnsep_sweep_spec_free(struct AttnsepSweepSpec *spec);

// Runs the sweep on `threads` workers (0 = one per core).
//
// # Safety
// `spec` must come from `attnsep_sweep_spec_new`; `out` must be writable.
enum AttnsepStatus attnsep_sweep_run(const struct AttnsepSweepSpec *spec,
                                     uint32_t threads,
                                     struct AttnsepSweepResult **out);

// Number of sweep points that ran; 0 for NULL.
//
// # Safety
// `result` must come from `attnsep_sweep_run` or be NULL.
size_t attnsep_sweep_result_len(const struct AttnsepSweepResult *result);

// Number of sweep points skipped for invalid configuration; 0 for NULL.
//
// # Safety
// `result` must come from `attnsep_sweep_run` or be NULL.
size_t attnsep_sweep_result_skipped(const struct AttnsepSweepResult *result);

// # Safety
// `result` must come from `attnsep_sweep_run`; `out` must be writable.
enum AttnsepStatus attnsep_sweep_result_row(const struct AttnsepSweepResult *result,
                                            size_t index,
                                            struct AttnsepSweepRow *out);

// Writes the result in the same CSV layout as the command-line tool.
//
// # Safety
// `result` must come from `attnsep_sweep_run`; `path` must be a
// NUL-terminated string.
enum AttnsepStatus attnsep_sweep_result_write_csv(const struct AttnsepSweepResult *result,
                                                  const char *path);

// # Safety
// `result` must come from `attnsep_sweep_run` or be NULL.
void attnsep_sweep_result_free(struct AttnsepSweepResult *result);

// Largest gap between `vec(exp(A1 X A2^T))` and `exp((A1 ⊗ A2) vec(X))`.
// `a1` and `a2` are row-major `n x d`, `x` is row-major `d x d`.
//
// # Safety
// The input pointers must reference the stated number of doubles; `out`
// must be writable.
enum AttnsepStatus attnsep_tensor_trick_residual(const double *a1,
                                                 const double *a2,
                                                 const double *x,
                                                 size_t n,
                                                 size_t d,
                                                 double *out);

// Runs the verification suite and reports how many cases passed.
//
// # Safety
// `passed` and `total` must be writable.
enum AttnsepStatus attnsep_verify(bool quick, size_t *passed, size_t *total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATTNSEP_H */
