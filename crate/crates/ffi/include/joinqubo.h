#ifndef JOINQUBO_H
#define JOINQUBO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum JqStatus {
  JQ_OK = 0,
  JQ_NULL_ARGUMENT = 1,
  JQ_INVALID_UTF8 = 2,
  // Malformed or inconsistent workload document.
  JQ_INVALID_WORKLOAD = 3,
  JQ_UNKNOWN_QUERY = 4,
  JQ_INVALID_ARGUMENT = 5,
  // The solver or oracle failed; see the error message.
  JQ_SOLVE_FAILED = 6,
  JQ_BUFFER_TOO_SMALL = 7,
  // A Rust panic was caught at the boundary.
  JQ_INTERNAL = 8,
} JqStatus;

typedef enum JqStrategy {
  JQ_STRATEGY_DIRECT = 0,
  JQ_STRATEGY_RELAX = 1,
  JQ_STRATEGY_DECOMPOSE = 2,
} JqStrategy;

typedef enum JqMode {
  JQ_MODE_AUTO = 0,
  JQ_MODE_DIRECT = 1,
  JQ_MODE_RELAX = 2,
  JQ_MODE_DECOMPOSE = 3,
} JqMode;

typedef struct JqSolution JqSolution;

// Parsed catalog plus its queries.
typedef struct JqWorkload JqWorkload;

// Solver options; obtain defaults from `jq_solve_options_default`.
typedef struct JqSolveOptions {
  double budget_ms;
  uint64_t seed;
  // A `JqMode` value.
  int32_t mode;
  // Largest QUBO (in variables) sampled without decomposition.
  uint32_t capacity;
  uint32_t num_reads;
  uint32_t sweeps;
} JqSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *jq_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *jq_version(void);

// Parses a JSON workload document into a new handle.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum JqStatus jq_workload_parse(const char *json, struct JqWorkload **out);

// # Safety
// `workload` must come from `jq_workload_parse` and not be used afterwards. Null is ignored.
void jq_workload_free(struct JqWorkload *workload);

// Number of queries in the workload.
//
// # Safety
// `workload` must be a live handle; `out` a valid pointer.
enum JqStatus jq_workload_query_count(const struct JqWorkload *workload, size_t *out);

struct JqSolveOptions jq_solve_options_default(void);

// Solves one query. `options` may be null for defaults.
//
// # Safety
// `workload` must be a live handle, `query_id` NUL-terminated, `options`
// null or valid, and `out` a valid pointer.
enum JqStatus jq_solve(const struct JqWorkload *workload,
                       const char *query_id,
                       const struct JqSolveOptions *options,
                       struct JqSolution **out);

// # Safety
// `solution` must come from `jq_solve` and not be used afterwards. Null is ignored.
void jq_solution_free(struct JqSolution *solution);

// Estimated plan cost (sum of intermediate result cardinalities).
//
// # Safety
// `solution` must be a live handle; `out` a valid pointer.
enum JqStatus jq_solution_cost(const struct JqSolution *solution, double *out);

// # Safety
// `solution` must be a live handle; `out` a valid pointer.
enum JqStatus jq_solution_strategy(const struct JqSolution *solution, enum JqStrategy *out);

// True when the budget ran out before the first sample and the plan is the greedy fallback.
//
// # Safety
// `solution` must be a live handle; `out` a valid pointer.
enum JqStatus jq_solution_degraded(const struct JqSolution *solution, bool *out);

// Sum of solver, communication and refinement time over all iterations, in ms.
//
// # Safety
// `solution` must be a live handle; `out` a valid pointer.
enum JqStatus jq_solution_time_quantum_ms(const struct JqSolution *solution, double *out);

// Number of sampling iterations.
//
// # Safety
// `solution` must be a live handle; `out` a valid pointer.
enum JqStatus jq_solution_iterations(const struct JqSolution *solution, size_t *out);

// `Leading(...)` hint text.
//
// # Safety
// `solution` must be a live handle; `buf` must hold `cap` bytes (may be
// null when `cap` is 0); `needed` may be null.
enum JqStatus jq_solution_hint(const struct JqSolution *solution,
                               char *buf,
                               size_t cap,
                               size_t *needed);

// Plan in canonical `((a b) c)` form.
//
// # Safety
// Same as `jq_solution_hint`.
enum JqStatus jq_solution_plan(const struct JqSolution *solution,
                               char *buf,
                               size_t cap,
                               size_t *needed);

// Per-iteration timing trace as CSV with a header row.
//
// # Safety
// Same as `jq_solution_hint`.
enum JqStatus jq_solution_trace_csv(const struct JqSolution *solution,
                                    char *buf,
                                    size_t cap,
                                    size_t *needed);

// Exact dynamic-programming optimum: cost into `cost`, hint into `buf`.
//
// # Safety
// `workload` must be a live handle, `query_id` NUL-terminated, `cost` a
// valid pointer; buffer rules as in `jq_solution_hint`.
enum JqStatus jq_oracle(const struct JqWorkload *workload,
                        const char *query_id,
                        double *cost,
                        char *buf,
                        size_t cap,
                        size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JOINQUBO_H */
