#ifndef VNTHERMO_H
#define VNTHERMO_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stdint.h>
#include <stddef.h>

#define VN_MODE_COLLAPSE 0

#define VN_MODE_NO_COLLAPSE 1

#define VN_RESET_LANDAUER 0

#define VN_RESET_UNITARY_ATTEMPT 1

typedef enum VnStatus {
  VN_STATUS_OK = 0,
  VN_STATUS_NULL_POINTER = 1,
  VN_STATUS_INVALID_UTF8 = 2,
  VN_STATUS_PARSE = 3,
  VN_STATUS_VALIDATION = 4,
  VN_STATUS_STEP = 5,
  VN_STATUS_NUMERICAL = 6,
  VN_STATUS_PANIC = 7,
} VnStatus;

/**
 * A protocol ready to run.
 */
typedef struct VnProtocol VnProtocol;

/**
 * The ledger and final state of a completed run.
 */
typedef struct VnRun VnRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread; empty after a success.
 * The pointer stays valid until the next call into this library.
 */
const char *vn_last_error_message(void);

/**
 * Builds a named builtin protocol. `w1_squared` only affects `vn-cycle`.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum VnStatus vn_protocol_builtin(const char *name,
                                  double w1_squared,
                                  uint64_t particles,
                                  struct VnProtocol **out);

/**
 * Parses and validates a TOML protocol document.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum VnStatus vn_protocol_parse(const char *text, struct VnProtocol **out);

/**
 * Serializes a protocol as TOML.
 *
 * # Safety
 * `protocol` must come from this library; `out` must be writable.
 */
enum VnStatus vn_protocol_to_toml(struct VnProtocol *protocol, char **out);

/**
 * # Safety
 * `protocol` must come from this library.
 */
enum VnStatus vn_protocol_set_cycles(struct VnProtocol *protocol, uint32_t cycles);

/**
 * # Safety
 * `protocol` must come from this library.
 */
enum VnStatus vn_protocol_set_temperature(struct VnProtocol *protocol, double temperature);

/**
 * # Safety
 * `protocol` must come from this library.
 */
enum VnStatus vn_protocol_set_kb(struct VnProtocol *protocol, double kb);

/**
 * `mode` is `VN_MODE_COLLAPSE` or `VN_MODE_NO_COLLAPSE`.
 *
 * # Safety
 * `protocol` must come from this library.
 */
enum VnStatus vn_protocol_set_mode(struct VnProtocol *protocol, uint32_t mode);

/**
 * Rewrites every reset step; `kind` is `VN_RESET_LANDAUER` or
 * `VN_RESET_UNITARY_ATTEMPT`.
 *
 * # Safety
 * `protocol` must come from this library.
 */
enum VnStatus vn_protocol_set_reset(struct VnProtocol *protocol, uint32_t kind);

/**
 * # Safety
 * `protocol` must come from this library.
 */
enum VnStatus vn_protocol_set_permit_infeasible_reset(struct VnProtocol *protocol, bool permit);

/**
 * # Safety
 * `protocol` must come from this library.
 */
enum VnStatus vn_protocol_set_seed(struct VnProtocol *protocol, uint64_t seed);

/**
 * # Safety
 * `protocol` must come from this library or be null; it must not be used afterwards.
 */
void vn_protocol_free(struct VnProtocol *protocol);

/**
 * Executes every cycle of the protocol.
 *
 * # Safety
 * `protocol` must come from this library; `out` must be writable.
 */
enum VnStatus vn_run(struct VnProtocol *protocol, struct VnRun **out);

/**
 * The ledger in the same CSV layout as the command-line tool.
 *
 * # Safety
 * `run` must come from this library; `out` must be writable.
 */
enum VnStatus vn_run_ledger_csv(const struct VnRun *run, char **out);

/**
 * Net work extracted over the whole run, in units of `k_B T`.
 *
 * # Safety
 * `run` must come from this library; `out` must be writable.
 */
enum VnStatus vn_run_net_work(const struct VnRun *run, double *out);

/**
 * The second-law audit as JSON.
 *
 * # Safety
 * `run` must come from this library; `out` must be writable.
 */
enum VnStatus vn_run_audit_json(const struct VnRun *run, char **out);

/**
 * 0 for a clean audit, 10 on a violation, 11 when only nonphysical steps occurred.
 *
 * # Safety
 * `run` must come from this library; `out` must be writable.
 */
enum VnStatus vn_run_audit_exit_code(const struct VnRun *run, int32_t *out);

/**
 * # Safety
 * `run` must come from this library or be null; it must not be used afterwards.
 */
void vn_run_free(struct VnRun *run);

/**
 * # Safety
 * `s` must be a string returned by this library or null.
 */
void vn_string_free(char *s);

/**
 * Von Neumann entropy (natural log) of a `dim`-by-`dim` density matrix
 * given as row-major real and imaginary parts.
 *
 * # Safety
 * `re` and `im` must each point to `dim * dim` readable doubles; `out` must be writable.
 */
enum VnStatus vn_von_neumann_entropy(const double *re,
                                     const double *im,
                                     uintptr_t dim,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VNTHERMO_H */
