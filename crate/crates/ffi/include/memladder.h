#ifndef MEMLADDER_H
#define MEMLADDER_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; values 2 to 5 match the command-line exit codes.
 */
typedef enum MlStatus {
  ML_STATUS_OK = 0,
  ML_STATUS_INTERNAL = 1,
  ML_STATUS_CONFIG = 2,
  ML_STATUS_PLAN_MISMATCH = 3,
  ML_STATUS_MISSING_ARTIFACTS = 4,
  ML_STATUS_TOO_LARGE = 5,
  ML_STATUS_NULL_ARGUMENT = 6,
  ML_STATUS_INVALID_UTF8 = 7,
  ML_STATUS_OUT_OF_RANGE = 8,
  ML_STATUS_BUFFER_TOO_SMALL = 9,
  ML_STATUS_PANIC = 10,
} MlStatus;

typedef enum MlLoss {
  ML_LOSS_ONE_HOT = 0,
  ML_LOSS_DISTILL = 1,
} MlLoss;

typedef enum MlCategory {
  ML_CATEGORY_CONSTANT = 0,
  ML_CATEGORY_INCREASING = 1,
  ML_CATEGORY_DECREASING = 2,
  ML_CATEGORY_CAP_SHAPED = 3,
  ML_CATEGORY_OTHER = 4,
} MlCategory;

/**
 * A parsed and validated experiment configuration.
 */
typedef struct MlConfig MlConfig;

/**
 * An opened artifact directory.
 */
typedef struct MlExperiment MlExperiment;

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated, truncated
 * to `len`). Returns the buffer size needed for the whole message, including the NUL.
 *
 * # Safety
 * `buf` is null or points to `len` writable bytes.
 */
size_t ml_last_error(char *buf, size_t len);

/**
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void ml_string_free(char *s);

/**
 * Parse and validate a JSON configuration.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` points to writable storage for a handle.
 */
enum MlStatus ml_config_parse(const char *json, struct MlConfig **out);

/**
 * # Safety
 * `cfg` is null or a handle from [`ml_config_parse`] not yet freed.
 */
void ml_config_free(struct MlConfig *cfg);

/**
 * Canonical JSON (sorted keys, defaults filled in); free with [`ml_string_free`].
 *
 * # Safety
 * `cfg` is a live handle; `out` points to writable storage for a pointer.
 */
enum MlStatus ml_config_canonical(const struct MlConfig *cfg, char **out);

/**
 * Train every run of the experiment in `config_path` under `out_dir` and write its
 * reports. `failed_runs`, when non-null, receives the number of runs that failed.
 *
 * # Safety
 * String arguments are NUL-terminated; `failed_runs` is null or writable.
 */
enum MlStatus ml_run(const char *config_path,
                     const char *out_dir,
                     size_t workers,
                     bool resume,
                     size_t *failed_runs);

/**
 * Write one report kind (`mem`, `cprox`, `depth`, `trajectory`, `distill`,
 * `robustness`) for the experiment in `out_dir`, with the config's alphas and tau.
 *
 * # Safety
 * String arguments are NUL-terminated.
 */
enum MlStatus ml_report(const char *out_dir, const char *kind);

/**
 * # Safety
 * `dir` is NUL-terminated; `out` points to writable storage for a handle.
 */
enum MlStatus ml_experiment_open(const char *dir, struct MlExperiment **out);

/**
 * # Safety
 * `exp` is null or a handle from [`ml_experiment_open`] not yet freed.
 */
void ml_experiment_free(struct MlExperiment *exp);

/**
 * Number of examples, or 0 for a null handle.
 *
 * # Safety
 * `exp` is null or a live handle.
 */
size_t ml_experiment_num_examples(const struct MlExperiment *exp);

/**
 * Number of ladder entries, or 0 for a null handle.
 *
 * # Safety
 * `exp` is null or a live handle.
 */
size_t ml_experiment_ladder_len(const struct MlExperiment *exp);

/**
 * Memorisation scores of one ladder entry into `mem[0..len]`; NaN marks examples
 * without both in-sample and out-of-sample runs. `len` must equal the example count.
 *
 * # Safety
 * `exp` is a live handle; `mem` points to `len` writable doubles.
 */
enum MlStatus ml_experiment_mem(const struct MlExperiment *exp,
                                size_t ladder_index,
                                enum MlLoss loss,
                                double *mem,
                                size_t len);

/**
 * Category of a score sequence under deadband `alpha`.
 *
 * # Safety
 * `scores` points to `n` readable doubles; `out` is writable.
 */
enum MlStatus ml_classify_trajectory(const double *scores,
                                     size_t n,
                                     double alpha,
                                     enum MlCategory *out);

#endif  /* MEMLADDER_H */
