#ifndef SING_H
#define SING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SingStatus {
  SING_STATUS_OK = 0,
  SING_STATUS_NULL_POINTER = 1,
  SING_STATUS_DIMENSION_MISMATCH = 2,
  SING_STATUS_INVALID_INPUT = 3,
  SING_STATUS_INVALID_CONFIG = 4,
  SING_STATUS_NON_FINITE = 5,
  SING_STATUS_CONSTRAINT = 6,
  SING_STATUS_NOT_CONVERGED = 7,
  SING_STATUS_NUMERICAL = 8,
  SING_STATUS_IO = 9,
  SING_STATUS_PARSE = 10,
  SING_STATUS_BUFFER_TOO_SMALL = 11,
  SING_STATUS_PANIC = 99,
} SingStatus;

/**
 * Which matrix of a single-dataset fit to read.
 */
typedef enum SingLngcaPart {
  SING_LNGCA_PART_UNMIXING = 0,
  SING_LNGCA_PART_MIXING = 1,
  SING_LNGCA_PART_COMPONENTS = 2,
} SingLngcaPart;

/**
 * Which matrix of a joint fit to read.
 */
typedef enum SingJointPart {
  /**
   * Joint subject scores from X, unit columns.
   */
  SING_JOINT_PART_M_JX = 0,
  /**
   * Joint subject scores from Y, unit columns signed to agree with X.
   */
  SING_JOINT_PART_M_JY = 1,
  SING_JOINT_PART_S_JX = 2,
  SING_JOINT_PART_S_JY = 3,
  SING_JOINT_PART_M_IX = 4,
  SING_JOINT_PART_M_IY = 5,
  SING_JOINT_PART_S_IX = 6,
  SING_JOINT_PART_S_IY = 7,
  SING_JOINT_PART_UX = 8,
  SING_JOINT_PART_UY = 9,
} SingJointPart;

typedef struct SingJointFit SingJointFit;

typedef struct SingLngcaFit SingLngcaFit;

/**
 * Dense matrix of doubles.
 */
typedef struct SingMatrix SingMatrix;

/**
 * Options for [`sing_joint_fit`]. Obtain defaults from
 * [`sing_joint_options_default`].
 */
typedef struct SingJointOptions {
  /**
   * Components for X; 0 uses the data rank.
   */
  size_t r_x;
  /**
   * Components for Y; 0 uses the data rank.
   */
  size_t r_y;
  size_t r_j;
  /**
   * Penalty weight; negative selects the default rule.
   */
  double rho;
  size_t restarts;
  uint64_t seed;
  /**
   * Skewness weight of the contrast.
   */
  double alpha;
} SingJointOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sing_version(void);

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *sing_last_error(void);

/**
 * Copies `rows * cols` row-major values into a new matrix.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles; `out` must be writable.
 */
enum SingStatus sing_matrix_new(size_t rows,
                                size_t cols,
                                const double *data,
                                struct SingMatrix **out);

/**
 * # Safety
 * `m` must be a live matrix handle or null.
 */
size_t sing_matrix_rows(const struct SingMatrix *m);

/**
 * # Safety
 * `m` must be a live matrix handle or null.
 */
size_t sing_matrix_cols(const struct SingMatrix *m);

/**
 * Writes the values row-major into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `m` must be a live matrix handle; `buf` must hold `len` writable doubles.
 */
enum SingStatus sing_matrix_copy(const struct SingMatrix *m, double *buf, size_t len);

/**
 * # Safety
 * `m` must be a handle from this library, freed at most once, or null.
 */
void sing_matrix_free(struct SingMatrix *m);

/**
 * Fits `r` non-Gaussian components of a subjects × features matrix; `r = 0`
 * fits as many as the data rank. Double centering and whitening are applied
 * internally.
 *
 * # Safety
 * `x` must be a live matrix handle; `out` must be writable.
 */
enum SingStatus sing_lngca_fit(const struct SingMatrix *x,
                               size_t r,
                               size_t restarts,
                               uint64_t seed,
                               double alpha,
                               struct SingLngcaFit **out);

/**
 * # Safety
 * `fit` must be a live fit handle; `out` must be writable.
 */
enum SingStatus sing_lngca_fit_matrix(const struct SingLngcaFit *fit,
                                      enum SingLngcaPart part,
                                      struct SingMatrix **out);

/**
 * Summed contrast of the fitted components, or NaN for a null handle.
 *
 * # Safety
 * `fit` must be a live fit handle or null.
 */
double sing_lngca_fit_objective(const struct SingLngcaFit *fit);

/**
 * # Safety
 * `fit` must be a handle from this library, freed at most once, or null.
 */
void sing_lngca_fit_free(struct SingLngcaFit *fit);

/**
 * Permutation test for the number of shared score columns between two
 * mixing matrices (subjects × components).
 *
 * # Safety
 * `mx`, `my` must be live matrix handles; `r_j` must be writable.
 */
enum SingStatus sing_joint_rank_test(const struct SingMatrix *mx,
                                     const struct SingMatrix *my,
                                     size_t permutations,
                                     double level,
                                     uint64_t seed,
                                     size_t *r_j);

struct SingJointOptions sing_joint_options_default(void);

/**
 * Separate fits of both datasets, matching, then the penalized joint fit.
 *
 * # Safety
 * `x`, `y` must be live matrix handles; `opts` must be readable; `out` must be writable.
 */
enum SingStatus sing_joint_fit(const struct SingMatrix *x,
                               const struct SingMatrix *y,
                               const struct SingJointOptions *opts,
                               struct SingJointFit **out);

/**
 * # Safety
 * `fit` must be a live fit handle; `out` must be writable.
 */
enum SingStatus sing_joint_fit_matrix(const struct SingJointFit *fit,
                                      enum SingJointPart part,
                                      struct SingMatrix **out);

/**
 * Copies the joint scale factors of X (`side = 0`) or Y (`side = 1`).
 *
 * # Safety
 * `fit` must be a live fit handle; `buf` must hold `len` writable doubles.
 */
enum SingStatus sing_joint_fit_scales(const struct SingJointFit *fit,
                                      uint32_t side,
                                      double *buf,
                                      size_t len);

/**
 * Penalty weight used by the fit, or NaN for a null handle.
 *
 * # Safety
 * `fit` must be a live fit handle or null.
 */
double sing_joint_fit_rho(const struct SingJointFit *fit);

/**
 * 1 if the search met its stopping rule, 0 otherwise or for a null handle.
 *
 * # Safety
 * `fit` must be a live fit handle or null.
 */
int32_t sing_joint_fit_converged(const struct SingJointFit *fit);

/**
 * # Safety
 * `fit` must be a handle from this library, freed at most once, or null.
 */
void sing_joint_fit_free(struct SingJointFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SING_H */
