#ifndef CONCEPT_INDUCTION_H
#define CONCEPT_INDUCTION_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum CiStatus {
  CI_STATUS_OK = 0,
  CI_STATUS_NULL_ARGUMENT = 1,
  CI_STATUS_INVALID_UTF8 = 2,
  CI_STATUS_IO = 3,
  // Unreadable, malformed or unsupported session file.
  CI_STATUS_SESSION_FORMAT = 4,
  CI_STATUS_INVALID_ARGUMENT = 5,
  CI_STATUS_CLUSTERING = 6,
  CI_STATUS_PANIC = 99,
} CiStatus;

// Opaque session handle.
typedef struct CiSession CiSession;

typedef struct CiMetrics {
  size_t tp;
  size_t fp;
  size_t fn_;
  size_t tn;
  double accuracy;
  double precision;
  double recall;
  double f1;
  // 1 when there were no positive predictions.
  uint8_t precision_undefined;
  // 1 when there were no positive gold labels.
  uint8_t recall_undefined;
} CiMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *ci_last_error(void);

// Library version; static storage.
const char *ci_version(void);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ci_string_free(char *s);

// Loads a session file into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum CiStatus ci_session_load(const char *path, struct CiSession **out);

// Parses a session from JSON text into `*out`.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum CiStatus ci_session_from_json(const char *json, struct CiSession **out);

// Writes the session to `path`.
//
// # Safety
// `session` must be a live handle; `path` a NUL-terminated string.
enum CiStatus ci_session_save(const struct CiSession *session, const char *path);

// Session as JSON; free with [`ci_string_free`]. Null on failure.
//
// # Safety
// `session` must be a live handle.
char *ci_session_to_json(const struct CiSession *session);

// Checks session invariants. Writes the number of violations to
// `*n_violations` and, when `report` is non-null, a JSON list of them to
// `*report` (free with [`ci_string_free`]).
//
// # Safety
// `session` must be a live handle; out pointers writable or null.
enum CiStatus ci_session_validate(const struct CiSession *session,
                                  size_t *n_violations,
                                  char **report);

// # Safety
// `session` must be a live handle or null.
size_t ci_session_n_documents(const struct CiSession *session);

// Number of active concepts.
//
// # Safety
// `session` must be a live handle or null.
size_t ci_session_n_concepts(const struct CiSession *session);

// Fraction of documents matched by no active concept; NaN for null.
//
// # Safety
// `session` must be a live handle or null.
double ci_session_outlier_fraction(const struct CiSession *session);

// Relabels every score with a new threshold in (0, 1].
//
// # Safety
// `session` must be a live handle.
enum CiStatus ci_session_set_threshold(struct CiSession *session, double threshold);

// Releases a handle. Null is ignored.
//
// # Safety
// `session` must come from this library and not have been freed.
void ci_session_free(struct CiSession *session);

// Accuracy, precision, recall and F1 of `predicted` against `gold`, each
// `n` bytes where non-zero is positive.
//
// # Safety
// Both arrays must hold `n` readable bytes; `out` must be writable.
enum CiStatus ci_classification_metrics(const uint8_t *predicted,
                                        const uint8_t *gold,
                                        size_t n,
                                        struct CiMetrics *out);

// Cohen's kappa between two raters of `n` binary labels.
//
// # Safety
// Both arrays must hold `n` readable bytes; `out` must be writable.
enum CiStatus ci_cohens_kappa(const uint8_t *labels_a,
                              const uint8_t *labels_b,
                              size_t n,
                              double *out);

// HDBSCAN over `n` row-major points of dimension `dim`. Writes one label per
// point to `labels` (-1 for noise). `min_samples` of 0 uses
// `min_cluster_size`.
//
// # Safety
// `points` must hold `n * dim` doubles and `labels` room for `n` values.
enum CiStatus ci_hdbscan(const double *points,
                         size_t n,
                         size_t dim,
                         size_t min_cluster_size,
                         size_t min_samples,
                         int64_t *labels);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONCEPT_INDUCTION_H */
