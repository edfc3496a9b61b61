#ifndef REQCHECK_H
#define REQCHECK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcStatus {
  RC_STATUS_OK = 0,
  RC_STATUS_NULL_ARGUMENT = 1,
  RC_STATUS_INVALID_UTF8 = 2,
  RC_STATUS_INVALID_ARGUMENT = 3,
  RC_STATUS_MALFORMED_REQUIREMENTS = 4,
  RC_STATUS_APP_LOAD = 5,
  RC_STATUS_ACTION_PARSE = 6,
  RC_STATUS_ENVIRONMENT = 7,
  RC_STATUS_PANIC = 99,
} RcStatus;

typedef enum RcOutcome {
  RC_OUTCOME_UNMET = 0,
  RC_OUTCOME_PARTIALLY_MET = 1,
  RC_OUTCOME_MET = 2,
} RcOutcome;

/**
 * A simulated application plus its runtime state.
 */
typedef struct RcEnv RcEnv;

typedef struct RcPrf1 {
  double precision;
  double recall;
  double f1;
} RcPrf1;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Free with
 * [`rc_string_free`].
 */
char *rc_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void rc_string_free(char *s);

/**
 * Loads an app definition (JSON) and returns an environment at its initial
 * state.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum RcStatus rc_env_load(const char *path, struct RcEnv **out);

/**
 * # Safety
 * `env` must be NULL or a handle from [`rc_env_load`], not yet freed.
 */
void rc_env_free(struct RcEnv *env);

/**
 * # Safety
 * `env` must be a live handle from [`rc_env_load`].
 */
enum RcStatus rc_env_reset(struct RcEnv *env);

/**
 * Executes one action line such as `click(120, 48)` or `type("Tea")`.
 * `warning` may be NULL; otherwise it receives a warning string or NULL.
 *
 * # Safety
 * `env` must be a live handle; `action` a NUL-terminated string; `warning`
 * NULL or valid for writes.
 */
enum RcStatus rc_env_execute(struct RcEnv *env, const char *action, char **warning);

/**
 * Renders the current screen. Either output may be NULL.
 *
 * # Safety
 * `env` must be a live handle; outputs NULL or valid for writes.
 */
enum RcStatus rc_env_observe(struct RcEnv *env, char **rendering, uint64_t *state_hash);

/**
 * Parses the `REQ:`/`AC:` block format into a JSON array of requirements.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `json` valid for writes.
 */
enum RcStatus rc_parse_requirements(const char *text, char **json);

/**
 * Derives the requirement state from `len` verdicts (non-zero = met).
 *
 * # Safety
 * `verdicts` must point to `len` readable bytes; `out` valid for writes.
 */
enum RcStatus rc_derive_state(const uint8_t *verdicts, size_t len, enum RcOutcome *out);

/**
 * Cost of a run as a decimal string (four places). Rates are decimal
 * strings in currency per million tokens.
 *
 * # Safety
 * Rate arguments must be NUL-terminated strings; `cost` valid for writes.
 */
enum RcStatus rc_compute_cost(uint64_t input_tokens,
                              uint64_t output_tokens,
                              const char *input_rate,
                              const char *output_rate,
                              char **cost);

/**
 * Precision, recall and F1 from confusion counts (0/0 counts as 0).
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum RcStatus rc_prf1(uint64_t tp, uint64_t fp, uint64_t fn_, struct RcPrf1 *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REQCHECK_H */
