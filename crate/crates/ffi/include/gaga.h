#ifndef GAGA_H
#define GAGA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  GAGA_STATUS_OK = 0,
  GAGA_STATUS_NULL_POINTER = 1,
  GAGA_STATUS_INVALID_ARGUMENT = 2,
  GAGA_STATUS_DATA_ERROR = 3,
  GAGA_STATUS_NUMERIC_ERROR = 4,
  GAGA_STATUS_IO_ERROR = 5,
  GAGA_STATUS_PANIC = 6,
} GagaStatus;

/**
 * Expression matrix together with its group labels.
 */
typedef struct GagaDataset GagaDataset;

/**
 * Fitted hyperparameters with the patterns and groups they were fitted on.
 */
typedef struct GagaFit GagaFit;

/**
 * Ordered set of expression patterns, null pattern first.
 */
typedef struct GagaPatterns GagaPatterns;

/**
 * Options for [`gaga_fit`]. Zero or negative numeric fields fall back to the
 * library defaults.
 */
typedef struct {
  /**
   * 0 or 1 fits the single-component model; more fits a mixture.
   */
  size_t components;
  size_t max_iterations;
  double rel_tol;
  uint64_t seed;
} GagaFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *gaga_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gaga_version(void);

/**
 * Builds a dataset from `n_genes * n_arrays` positive values and one group
 * label per array.
 *
 * # Safety
 * `values` must point to `n_genes * n_arrays` doubles and `labels` to
 * `n_arrays` labels; `out` must be writable.
 */
GagaStatus gaga_dataset_new(const double *values,
                            size_t n_genes,
                            size_t n_arrays,
                            const size_t *labels,
                            GagaDataset **out);

/**
 * # Safety
 * `dataset` must be NULL or a handle from `gaga_dataset_new` not yet freed.
 */
void gaga_dataset_free(GagaDataset *dataset);

/**
 * Number of genes and groups in a dataset.
 *
 * # Safety
 * `dataset` must be a live handle; the output pointers must be writable.
 */
GagaStatus gaga_dataset_shape(const GagaDataset *dataset, size_t *n_genes, size_t *n_groups);

/**
 * Builds a pattern set from `n_patterns * n_groups` class codes, one row per
 * pattern. The first row must be the null pattern.
 *
 * # Safety
 * `codes` must point to `n_patterns * n_groups` values; `out` must be writable.
 */
GagaStatus gaga_patterns_new(const size_t *codes,
                             size_t n_patterns,
                             size_t n_groups,
                             GagaPatterns **out);

/**
 * The two-group set: all equal, then the groups differ.
 *
 * # Safety
 * `out` must be writable.
 */
GagaStatus gaga_patterns_two_group(GagaPatterns **out);

/**
 * # Safety
 * `patterns` must be NULL or a live handle.
 */
void gaga_patterns_free(GagaPatterns *patterns);

/**
 * Defaults matching the command-line tool.
 */
GagaFitOptions gaga_fit_options_default(void);

/**
 * Estimates hyperparameters by EM.
 *
 * # Safety
 * `dataset` and `patterns` must be live handles; `options` may be NULL for
 * defaults; `out` must be writable.
 */
GagaStatus gaga_fit(const GagaDataset *dataset,
                    const GagaPatterns *patterns,
                    const GagaFitOptions *options,
                    GagaFit **out);

/**
 * # Safety
 * `fit` must be NULL or a live handle.
 */
void gaga_fit_free(GagaFit *fit);

/**
 * Final log marginal likelihood, number of EM iterations and whether the
 * run converged (1) or hit the iteration cap (0).
 *
 * # Safety
 * `fit` must be a live handle; each output pointer may be NULL to skip it.
 */
GagaStatus gaga_fit_summary(const GagaFit *fit,
                            double *loglik,
                            size_t *iterations,
                            int32_t *converged);

/**
 * Number of patterns the fit was made with.
 *
 * # Safety
 * `fit` must be a live handle.
 */
GagaStatus gaga_fit_n_patterns(const GagaFit *fit, size_t *n_patterns);

/**
 * Writes the fit as JSON.
 *
 * # Safety
 * `fit` must be a live handle and `file` a NUL-terminated path.
 */
GagaStatus gaga_fit_save(const GagaFit *fit, const char *file);

/**
 * Reads a fit written by [`gaga_fit_save`] or the command-line tool.
 *
 * # Safety
 * `file` must be a NUL-terminated path and `out` writable.
 */
GagaStatus gaga_fit_load(const char *file, GagaFit **out);

/**
 * Posterior pattern probabilities, `n_genes * n_patterns` values written
 * row-major into `out`.
 *
 * # Safety
 * `fit` and `dataset` must be live handles and `out` must hold `out_len`
 * doubles.
 */
GagaStatus gaga_posterior(const GagaFit *fit,
                          const GagaDataset *dataset,
                          double *out,
                          size_t out_len);

/**
 * Declares genes at Bayesian FDR `fdr`. For each gene, `declared` gets 0/1
 * and `pattern` the assigned pattern (0 when not declared). Both arrays hold
 * `n_genes` entries.
 *
 * # Safety
 * `fit` and `dataset` must be live handles; `declared` and `pattern` must
 * hold `n_genes` entries; `n_declared` may be NULL.
 */
GagaStatus gaga_find_genes(const GagaFit *fit,
                           const GagaDataset *dataset,
                           double fdr,
                           uint8_t *declared,
                           size_t *pattern,
                           size_t n_genes,
                           size_t *n_declared);

/**
 * Log normalizing constant of the gamma-shape density with parameters
 * (a, b, c, d, r, s), by the gamma approximation.
 *
 * # Safety
 * `a` and `s` must each hold `len` doubles; `out` must be writable.
 */
GagaStatus gaga_gas_log_norm_const(const double *a,
                                   const double *s,
                                   size_t len,
                                   double b,
                                   double c,
                                   double d,
                                   double r,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAGA_H */
