#ifndef PRIVMAP_H
#define PRIVMAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a solve.
typedef enum PrivmapSolveStatus {
  // Successive iterates moved less than `epsilon`.
  PRIVMAP_SOLVE_STATUS_CONVERGED = 0,
  // Stopped at `max_iter`.
  PRIVMAP_SOLVE_STATUS_MAX_ITER = 1,
} PrivmapSolveStatus;

// Result codes. Values are stable.
typedef enum PrivmapStatus {
  PRIVMAP_STATUS_OK = 0,
  PRIVMAP_STATUS_NULL_POINTER = 1,
  PRIVMAP_STATUS_INVALID_ARGUMENT = 2,
  PRIVMAP_STATUS_PARSE = 3,
  PRIVMAP_STATUS_IO = 4,
  PRIVMAP_STATUS_INVALID_DISTRIBUTION = 5,
  PRIVMAP_STATUS_DIMENSION_MISMATCH = 6,
  PRIVMAP_STATUS_SUPPORT_VIOLATION = 7,
  PRIVMAP_STATUS_UNDEFINED_POSTERIOR = 8,
  PRIVMAP_STATUS_ILL_DEFINED_LEAKAGE = 9,
  PRIVMAP_STATUS_SOLVER_FAILURE = 10,
  PRIVMAP_STATUS_PANIC = 99,
} PrivmapStatus;

typedef struct PrivmapDirichlet PrivmapDirichlet;

typedef struct PrivmapModel PrivmapModel;

typedef struct PrivmapPrior PrivmapPrior;

typedef struct PrivmapResult PrivmapResult;

// Solver settings. Obtain defaults from [`privmap_solve_config_default`].
typedef struct PrivmapSolveConfig {
  double epsilon;
  size_t max_iter;
  size_t restarts;
  double inner_tol;
  size_t inner_max_iter;
  uint64_t seed;
  // Distortion budget; NaN means the model's own.
  double delta;
} PrivmapSolveConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *privmap_last_error(void);

// Library version as a static string.
const char *privmap_version(void);

// Parses a model from JSON text.
//
// # Safety
// `json` must be a nul-terminated string; `out` must be writable.
enum PrivmapStatus privmap_model_from_json(const char *json, struct PrivmapModel **out);

// Reads a model JSON file.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum PrivmapStatus privmap_model_load(const char *path, struct PrivmapModel **out);

// Writes `|X|`, `|Y|`, `|Z|`.
//
// # Safety
// `model` must come from this library; the outputs must be writable.
enum PrivmapStatus privmap_model_dims(const struct PrivmapModel *model,
                                      size_t *nx,
                                      size_t *ny,
                                      size_t *nz);

// # Safety
// `model` must come from this library and not be used afterwards.
void privmap_model_free(struct PrivmapModel *model);

// Adversary prior `{"p_hat_xy": [[...]]}` checked against `model`.
//
// # Safety
// Pointers must be valid; `json` nul-terminated.
enum PrivmapStatus privmap_prior_from_json(const struct PrivmapModel *model,
                                           const char *json,
                                           struct PrivmapPrior **out);

// The adversary that knows `p(x,y)`.
//
// # Safety
// Pointers must be valid.
enum PrivmapStatus privmap_prior_omniscient(const struct PrivmapModel *model,
                                            struct PrivmapPrior **out);

// # Safety
// `prior` must come from this library and not be used afterwards.
void privmap_prior_free(struct PrivmapPrior *prior);

// Dirichlet prior from `{"alpha": ...}` or `{"counts": ..., "nu": ...}`.
//
// # Safety
// `json` must be nul-terminated; `out` writable.
enum PrivmapStatus privmap_dirichlet_from_json(const char *json, struct PrivmapDirichlet **out);

// # Safety
// `prior` must come from this library and not be used afterwards.
void privmap_dirichlet_free(struct PrivmapDirichlet *prior);

struct PrivmapSolveConfig privmap_solve_config_default(void);

// Minimizes the leakage to `prior` with random restarts.
//
// # Safety
// Pointers must be valid; `out` writable.
enum PrivmapStatus privmap_solve(const struct PrivmapModel *model,
                                 const struct PrivmapPrior *prior,
                                 const struct PrivmapSolveConfig *cfg,
                                 struct PrivmapResult **out);

// Maximizes the Dirichlet lower bound on the expected posterior cost. The
// result's objective is the negated bound.
//
// # Safety
// Pointers must be valid; `out` writable.
enum PrivmapStatus privmap_solve_dirichlet(const struct PrivmapModel *model,
                                           const struct PrivmapDirichlet *prior,
                                           const struct PrivmapSolveConfig *cfg,
                                           struct PrivmapResult **out);

// Final objective in nats, or NaN for a null handle.
//
// # Safety
// `res` must be null or come from this library.
double privmap_result_objective(const struct PrivmapResult *res);

// Outer iterations performed, or 0 for a null handle.
//
// # Safety
// `res` must be null or come from this library.
size_t privmap_result_iterations(const struct PrivmapResult *res);

// # Safety
// Pointers must be valid.
enum PrivmapStatus privmap_result_status(const struct PrivmapResult *res,
                                         enum PrivmapSolveStatus *out);

// Copies the `|Y|×|Z|` channel into `buf` (row-major, `len` entries).
//
// # Safety
// `buf` must hold `len` doubles.
enum PrivmapStatus privmap_result_channel(const struct PrivmapResult *res, double *buf, size_t len);

// # Safety
// `res` must come from this library and not be used afterwards.
void privmap_result_free(struct PrivmapResult *res);

// Information leakage (nats) to `prior` under a row-major channel. May be
// `-inf` when the adversary's joint misses part of `p(x,y)`.
//
// # Safety
// Pointers must be valid; `channel` holds `len` doubles.
enum PrivmapStatus privmap_leakage(const struct PrivmapModel *model,
                                   const struct PrivmapPrior *prior,
                                   const double *channel,
                                   size_t len,
                                   double *out);

// Adversary's posterior cost (nats) under a row-major channel.
//
// # Safety
// Pointers must be valid; `channel` holds `len` doubles.
enum PrivmapStatus privmap_posterior_cost(const struct PrivmapModel *model,
                                          const struct PrivmapPrior *prior,
                                          const double *channel,
                                          size_t len,
                                          double *out);

// Dirichlet lower bound (nats) on the expected posterior cost.
//
// # Safety
// Pointers must be valid; `channel` holds `len` doubles.
enum PrivmapStatus privmap_dirichlet_lower_bound(const struct PrivmapModel *model,
                                                 const struct PrivmapDirichlet *prior,
                                                 const double *channel,
                                                 size_t len,
                                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIVMAP_H */
