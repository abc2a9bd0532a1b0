#ifndef POMCP_SHIELD_H
#define POMCP_SHIELD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PomcpDomain {
  POMCP_DOMAIN_TIGER = 0,
  POMCP_DOMAIN_VR = 1,
} PomcpDomain;

typedef enum PomcpStatus {
  POMCP_STATUS_OK = 0,
  POMCP_STATUS_NULL = 1,
  POMCP_STATUS_INVALID_ARGUMENT = 2,
  POMCP_STATUS_PARSE = 3,
  POMCP_STATUS_IO = 4,
  POMCP_STATUS_LEARN = 5,
  POMCP_STATUS_SHIELD = 6,
  POMCP_STATUS_PLAN = 7,
  POMCP_STATUS_BELIEF = 8,
  POMCP_STATUS_PANIC = 9,
  POMCP_STATUS_BUFFER_TOO_SMALL = 10,
} PomcpStatus;

/*
 A planning session for one episode.
 */
typedef struct PomcpAgent PomcpAgent;

/*
 A loaded shield.
 */
typedef struct PomcpShield PomcpShield;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or an empty string.
 The pointer stays valid until the next failing call on the same thread.
 */
const char *pomcp_last_error_message(void);

/*
 Squared Hellinger distance between two distributions of length `len`.

 # Safety
 `p` and `q` must point to `len` readable doubles; `out` must be writable.
 */
enum PomcpStatus pomcp_hellinger2(const double *p, const double *q, size_t len, double *out);

/*
 Reads a shield file.

 # Safety
 `path` must be a NUL-terminated string and `out` writable.
 */
enum PomcpStatus pomcp_shield_load(const char *path, struct PomcpShield **out);

/*
 Parses a shield from its text form.

 # Safety
 `text` must be a NUL-terminated string and `out` writable.
 */
enum PomcpStatus pomcp_shield_from_text(const char *text, struct PomcpShield **out);

/*
 Number of actions the shield knows about.

 # Safety
 `shield` must come from this library; `out` must be writable.
 */
enum PomcpStatus pomcp_shield_num_actions(const struct PomcpShield *shield, size_t *out);

/*
 Writes the legal actions for the focus marginal `probs` into `actions`.

 `*count` is set to the number of legal actions; when it exceeds
 `capacity`, nothing is written and `BUFFER_TOO_SMALL` is returned.

 # Safety
 `probs` must hold `len` doubles, `actions` `capacity` writable slots (may
 be null when `capacity` is 0); `count` and `fallback_used` must be
 writable, `fallback_used` may be null.
 */
enum PomcpStatus pomcp_shield_legal_actions(const struct PomcpShield *shield,
                                            const double *probs,
                                            size_t len,
                                            uint32_t *actions,
                                            size_t capacity,
                                            size_t *count,
                                            bool *fallback_used);

/*
 Smallest squared Hellinger distance from `probs` to a representative of
 `action`.

 # Safety
 `probs` must hold `len` doubles and `out` must be writable.
 */
enum PomcpStatus pomcp_shield_margin(const struct PomcpShield *shield,
                                     uint32_t action,
                                     const double *probs,
                                     size_t len,
                                     double *out);

/*
 # Safety
 `shield` must come from this library and not be used afterwards.
 */
void pomcp_shield_free(struct PomcpShield *shield);

/*
 Creates an agent with the domain's default model.

 `simulations == 0` uses the particle count, `c <= 0` the reward range and
 `gamma <= 0` the default discount. `shield` may be null.

 # Safety
 `shield` must be null or come from this library; `out` must be writable.
 The agent keeps its own reference to the shield.
 */
enum PomcpStatus pomcp_agent_new(enum PomcpDomain domain,
                                 size_t particles,
                                 size_t simulations,
                                 double c,
                                 double gamma,
                                 uint64_t seed,
                                 const struct PomcpShield *shield,
                                 struct PomcpAgent **out);

/*
 Searches from the current belief and returns the chosen action.

 # Safety
 `agent` must come from this library; `action` must be writable and
 `intervened` null or writable.
 */
enum PomcpStatus pomcp_agent_select_action(struct PomcpAgent *agent,
                                           uint32_t *action,
                                           bool *intervened);

/*
 Updates the belief with the executed action and the real observation.

 # Safety
 `agent` must come from this library.
 */
enum PomcpStatus pomcp_agent_observe(struct PomcpAgent *agent,
                                     uint32_t action,
                                     uint32_t observation);

/*
 Writes the focus marginal of the current belief into `probs`.

 `*len` is set to the number of categories; `BUFFER_TOO_SMALL` is returned
 when it exceeds `capacity`.

 # Safety
 `probs` must have `capacity` writable slots and `len` must be writable.
 */
enum PomcpStatus pomcp_agent_belief(const struct PomcpAgent *agent,
                                    double *probs,
                                    size_t capacity,
                                    size_t *len);

/*
 # Safety
 `agent` must come from this library and not be used afterwards.
 */
void pomcp_agent_free(struct PomcpAgent *agent);

/*
 Learns rule thresholds from an XES trace and returns the rule text.

 `template_path` may be null to use the domain's built-in template. The
 returned string must be released with [`pomcp_string_free`].

 # Safety
 Paths must be NUL-terminated strings and `out` writable.
 */
enum PomcpStatus pomcp_learn_rule_file(const char *xes_path, const char *template_path, char **out);

/*
 # Safety
 `s` must come from this library and not be used afterwards.
 */
void pomcp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POMCP_SHIELD_H */
