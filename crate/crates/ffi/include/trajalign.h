#ifndef TRAJALIGN_H
#define TRAJALIGN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum TaStatus {
  TA_STATUS_OK = 0,
  TA_STATUS_NULL_ARGUMENT = 1,
  TA_STATUS_INVALID_UTF8 = 2,
  TA_STATUS_SCHEMA = 3,
  TA_STATUS_INVARIANT = 4,
  TA_STATUS_CONFIG = 5,
  TA_STATUS_ARITY = 6,
  TA_STATUS_NO_SCORE = 7,
  TA_STATUS_SHAPE = 8,
  TA_STATUS_ENCODER = 9,
  TA_STATUS_EMPTY_REFERENCE = 10,
  TA_STATUS_IO = 11,
  TA_STATUS_OTHER = 12,
  TA_STATUS_PANIC = 13,
} TaStatus;

// Replay outcome of one tool call.
typedef enum TaOutcome {
  TA_OUTCOME_ILLEGAL_FORMAT = 0,
  TA_OUTCOME_UNKNOWN_TOOL = 1,
  TA_OUTCOME_INVALID_ARGUMENTS = 2,
  TA_OUTCOME_SUCCESS_RESOURCE_NOT_FOUND = 3,
  TA_OUTCOME_SUCCESS = 4,
} TaOutcome;

// Verdict scale for [`ta_parse_boxed_score`].
typedef enum TaScale {
  // 0–10 rubric, divided by 10.
  TA_SCALE_TEN_TO_UNIT = 0,
  TA_SCALE_UNIT = 1,
} TaScale;

// Tool registry for outcome classification.
typedef struct TaRegistry TaRegistry;

// Configured scorer with its encoder.
typedef struct TaScorer TaScorer;

// Parsed trajectory.
typedef struct TaTrajectory TaTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL. The pointer is
// valid until the next call into the library from the same thread.
const char *ta_last_error_message(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ta_string_free(char *s);

// Parses a trajectory JSON document.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum TaStatus ta_trajectory_parse(const char *json, struct TaTrajectory **out);

// Number of calls in the trajectory, or 0 for NULL.
//
// # Safety
// `t` must be NULL or a live handle.
size_t ta_trajectory_num_calls(const struct TaTrajectory *t);

// Number of steps in the trajectory, or 0 for NULL.
//
// # Safety
// `t` must be NULL or a live handle.
size_t ta_trajectory_num_steps(const struct TaTrajectory *t);

// # Safety
// `t` must be NULL or a handle from [`ta_trajectory_parse`] not yet freed.
void ta_trajectory_free(struct TaTrajectory *t);

// Creates a scorer. `config_toml` may be NULL for defaults.
//
// # Safety
// `config_toml` must be NULL or NUL-terminated; `out` must be writable.
enum TaStatus ta_scorer_new(const char *config_toml, struct TaScorer **out);

// Scores `pred` against `reference` and writes the sample report as JSON to
// `out_json`. Free the result with [`ta_string_free`].
//
// # Safety
// All handles must be live; `sample_id` must be NUL-terminated; `out_json`
// must be writable.
enum TaStatus ta_scorer_score(const struct TaScorer *scorer,
                              const char *sample_id,
                              const struct TaTrajectory *reference,
                              const struct TaTrajectory *pred,
                              char **out_json);

// # Safety
// `s` must be NULL or a handle from [`ta_scorer_new`] not yet freed.
void ta_scorer_free(struct TaScorer *s);

// Parses a registry JSON document.
//
// # Safety
// `json` must be NUL-terminated; `out` must be writable.
enum TaStatus ta_registry_parse(const char *json, struct TaRegistry **out);

// # Safety
// `r` must be NULL or a handle from [`ta_registry_parse`] not yet freed.
void ta_registry_free(struct TaRegistry *r);

// Classifies one replayed call. `status` < 0 means no transport status;
// `error_text` may be NULL.
//
// # Safety
// `registry` must be live; strings must be NUL-terminated; `out` writable.
enum TaStatus ta_classify_call(const struct TaRegistry *registry,
                               const char *raw_request,
                               int32_t status,
                               const char *error_text,
                               enum TaOutcome *out);

// Minimum-cost assignment of a row-major `rows × cols` matrix. Writes the
// assigned column of each row to `out_cols` (length `rows`, -1 when the row
// is unassigned) and the total to `out_cost`.
//
// # Safety
// `cost` must hold `rows * cols` doubles; `out_cols` must hold `rows` slots.
enum TaStatus ta_hungarian(const double *cost,
                           size_t rows,
                           size_t cols,
                           ptrdiff_t *out_cols,
                           double *out_cost);

// Four-judge trimmed mean.
//
// # Safety
// `scores` must hold `len` doubles; `out` must be writable.
enum TaStatus ta_trimmed_mean(const double *scores, size_t len, double *out);

// Score from the last `\boxed{...}` in `response`, normalized to `[0, 1]`.
//
// # Safety
// `response` must be NUL-terminated; `out` must be writable.
enum TaStatus ta_parse_boxed_score(const char *response, enum TaScale scale, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAJALIGN_H */
