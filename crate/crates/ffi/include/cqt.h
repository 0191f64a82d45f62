#ifndef CQT_H
#define CQT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CqtStatus {
  CQT_STATUS_OK = 0,
  CQT_STATUS_NULL_POINTER = 1,
  CQT_STATUS_INVALID_UTF8 = 2,
  CQT_STATUS_PARSE = 3,
  CQT_STATUS_INVALID_ARGUMENT = 4,
  CQT_STATUS_INCONSISTENT = 5,
  CQT_STATUS_CAP_EXCEEDED = 6,
  CQT_STATUS_PANIC = 7,
} CqtStatus;

/**
 * Mirrors the CLI exit codes.
 */
typedef enum CqtVerdict {
  CQT_VERDICT_MEDIUM_CONSISTENT = 0,
  CQT_VERDICT_WEAK_ONLY = 2,
  CQT_VERDICT_INCONSISTENT = 3,
} CqtVerdict;

/**
 * Opaque family handle.
 */
typedef struct CqtFamily CqtFamily;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parse a scenario JSON document into a family.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CqtStatus cqt_family_from_json(const char *json, struct CqtFamily **out);

/**
 * Release a family. Null is ignored.
 *
 * # Safety
 * `fam` must come from `cqt_family_from_json` and not be freed twice.
 */
void cqt_family_free(struct CqtFamily *fam);

/**
 * Number of times `N` in the family.
 *
 * # Safety
 * Pointers must be valid.
 */
enum CqtStatus cqt_family_times(const struct CqtFamily *fam, size_t *out);

/**
 * Number of elementary histories.
 *
 * # Safety
 * Pointers must be valid.
 */
enum CqtStatus cqt_family_history_count(const struct CqtFamily *fam, size_t *out);

/**
 * Born probability of one elementary history given as `len` zero-based
 * member indices.
 *
 * # Safety
 * `history` must point to `len` readable values; other pointers valid.
 */
enum CqtStatus cqt_born_probability(const struct CqtFamily *fam,
                                    const size_t *history,
                                    size_t len,
                                    double *out);

/**
 * Decoherence functional `D(h1, h2)`.
 *
 * # Safety
 * `h1` and `h2` must each point to `len` readable values; outputs writable.
 */
enum CqtStatus cqt_decoherence(const struct CqtFamily *fam,
                               const size_t *h1,
                               const size_t *h2,
                               size_t len,
                               double *out_re,
                               double *out_im);

/**
 * Classify the family. `tol <= 0` selects the default tolerance.
 * `offdiag_max` may be null.
 *
 * # Safety
 * Pointers must be valid.
 */
enum CqtStatus cqt_classify(const struct CqtFamily *fam,
                            double tol,
                            enum CqtVerdict *verdict,
                            double *offdiag_max);

/**
 * Probability of the event made of `count` histories stored back to back
 * (`count * N` indices). Fails with `CQT_STATUS_INCONSISTENT` unless the
 * family is medium consistent.
 *
 * # Safety
 * `histories` must point to `count * N` readable values.
 */
enum CqtStatus cqt_event_probability(const struct CqtFamily *fam,
                                     const size_t *histories,
                                     size_t count,
                                     double tol,
                                     double *out);

/**
 * Number of ±1 assignments satisfying the magic-square constraints.
 *
 * # Safety
 * `out` must be writable.
 */
enum CqtStatus cqt_mermin_count(size_t *out);

/**
 * Message for the last failing call on this thread; empty after success.
 * Valid until the next call on the same thread.
 */
const char *cqt_last_error(void);

const char *cqt_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CQT_H */
