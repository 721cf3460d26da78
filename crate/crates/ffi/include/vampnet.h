#ifndef VAMPNET_H
#define VAMPNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum VampStatus {
  VAMP_STATUS_OK = 0,
  VAMP_STATUS_NULL_POINTER = 1,
  VAMP_STATUS_INVALID_UTF8 = 2,
  VAMP_STATUS_USAGE = 3,
  VAMP_STATUS_CONFIG = 4,
  VAMP_STATUS_PARSE = 5,
  VAMP_STATUS_IO = 6,
  VAMP_STATUS_CONTRACT = 7,
  VAMP_STATUS_DIMENSION = 8,
  VAMP_STATUS_NUMERIC_DOMAIN = 9,
  VAMP_STATUS_BUFFER_TOO_SMALL = 10,
  VAMP_STATUS_OUT_OF_RANGE = 11,
  VAMP_STATUS_PANIC = 12,
} VampStatus;

typedef enum VampModelKind {
  VAMP_MODEL_KIND_SET_MODEL = 0,
  VAMP_MODEL_KIND_MLP = 1,
  VAMP_MODEL_KIND_CNN = 2,
} VampModelKind;

/**
 * A loaded cohort.
 */
typedef struct VampCohort VampCohort;

/**
 * A loaded checkpoint.
 */
typedef struct VampModel VampModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library from the same thread.
 */
const char *vamp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vamp_version(void);

/**
 * Read a cohort interchange file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VampStatus vamp_cohort_load(const char *path, struct VampCohort **out);

/**
 * Parse a cohort from the text of an interchange file.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VampStatus vamp_cohort_parse(const char *text, struct VampCohort **out);

/**
 * Number of samples; 0 for NULL.
 *
 * # Safety
 * `cohort` must be NULL or a live handle.
 */
size_t vamp_cohort_len(const struct VampCohort *cohort);

/**
 * Label (1 = resistant) of sample `index`.
 *
 * # Safety
 * `cohort` must be a live handle and `out` a valid pointer.
 */
enum VampStatus vamp_cohort_label(const struct VampCohort *cohort, size_t index, uint8_t *out);

/**
 * # Safety
 * `cohort` must be NULL or a handle not yet freed.
 */
void vamp_cohort_free(struct VampCohort *cohort);

/**
 * Load a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VampStatus vamp_model_load(const char *path, struct VampModel **out);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum VampStatus vamp_model_kind(const struct VampModel *model, enum VampModelKind *out);

/**
 * Resistant-class probability for every sample of `cohort`, in sample
 * order. `len` is the capacity of `scores` and must cover the cohort.
 *
 * # Safety
 * Both handles must be live and `scores` must point to `len` doubles.
 */
enum VampStatus vamp_model_score(const struct VampModel *model,
                                 const struct VampCohort *cohort,
                                 double *scores,
                                 size_t len);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void vamp_model_free(struct VampModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VAMPNET_H */
