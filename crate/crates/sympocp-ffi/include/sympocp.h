#ifndef SYMPOCP_H
#define SYMPOCP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

#define SYMP_OK 0

// A required pointer argument was null.
#define SYMP_ERR_NULL 1

// Bad input: unknown names, malformed JSON, wrong dimensions.
#define SYMP_ERR_INVALID 2

// A numerical solver failed (non-convergence, singular matrix).
#define SYMP_ERR_SOLVER 3

// A Rust panic was caught at the boundary.
#define SYMP_ERR_PANIC 4

#define SYMP_METHOD_GF2_EULER 0

#define SYMP_METHOD_SERIES 1

#define SYMP_METHOD_DEL 2

#define SYMP_METHOD_DEL_ADAPTIVE 3

// Opaque problem handle.
typedef struct SympProblem SympProblem;

// Opaque trajectory handle.
typedef struct SympTrajectory SympTrajectory;

// Method selection. `order` applies to the series method and `alpha` to
// the DEL methods; a non-positive `tol` or zero `max_iter` keeps the
// defaults.
typedef struct SympMethod {
  int32_t kind;
  uint32_t order;
  double alpha;
  double tol;
  uint32_t max_iter;
} SympMethod;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *symp_last_error(void);

// Loads a built-in problem (`free`, `inverted`, `dblint`, `osc`).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
int32_t symp_problem_from_catalog(const char *name, struct SympProblem **out);

// Builds a problem from LQ JSON text.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
int32_t symp_problem_from_json(const char *json, struct SympProblem **out);

// # Safety
// `problem` must come from a `symp_problem_from_*` call and not be freed
// twice. Null is ignored.
void symp_problem_free(struct SympProblem *problem);

// State and control dimensions.
//
// # Safety
// All pointers must be valid.
int32_t symp_problem_dims(const struct SympProblem *problem, size_t *n, size_t *m);

// Integrates `steps` steps of size `h`. `q0` and `p0` (length `n`) may be
// null to use the problem's initial point.
//
// # Safety
// `problem`, `method` and `out` must be valid; non-null `q0`/`p0` must
// point to `n` doubles.
int32_t symp_integrate(const struct SympProblem *problem,
                       const struct SympMethod *method,
                       const double *q0,
                       const double *p0,
                       double h,
                       size_t steps,
                       struct SympTrajectory **out);

// Number of samples (0 for null).
//
// # Safety
// `traj` must be null or valid.
size_t symp_trajectory_len(const struct SympTrajectory *traj);

// Copies sample `k`: `q` and `p` need `n` doubles, `u` needs `m`. Any
// output pointer may be null to skip that field.
//
// # Safety
// `traj` must be valid and non-null outputs large enough.
int32_t symp_trajectory_sample(const struct SympTrajectory *traj,
                               size_t k,
                               double *t,
                               double *q,
                               double *p,
                               double *u,
                               double *h_value);

// # Safety
// `traj` must come from [`symp_integrate`] and not be freed twice. Null is
// ignored.
void symp_trajectory_free(struct SympTrajectory *traj);

// `‖MᵀΣM − Σ‖∞` of a row-major `dim × dim` matrix (`dim` even).
//
// # Safety
// `matrix` must point to `dim * dim` doubles and `out` be valid.
int32_t symp_symplectic_defect(const double *matrix, size_t dim, double *out);

// Largest symplecticity defect of one step of `method` over `samples`
// seeded random points in `[−1, 1]^{2n}`.
//
// # Safety
// All pointers must be valid.
int32_t symp_verify_symplecticity(const struct SympProblem *problem,
                                  const struct SympMethod *method,
                                  double h,
                                  size_t samples,
                                  uint64_t seed,
                                  double *max_defect);

// One step of the constant linear discrete Hamiltonian system with
// row-major `d × d` matrices `a` (symmetric), `b`, `c` (symmetric).
//
// # Safety
// Matrix pointers must hold `d * d` doubles; vector pointers `d` doubles.
int32_t symp_dhs_linear_step(size_t d,
                             const double *a,
                             const double *b,
                             const double *c,
                             const double *y,
                             const double *z,
                             double *y_next,
                             double *z_next);

// Exact flow of a catalog problem from `(q0, p0)` at time 0 to `t`, for
// comparisons from C. Returns `SYMP_ERR_INVALID` when no closed form is
// known.
//
// # Safety
// `q0`, `p0`, `q`, `p` must hold `n` doubles.
int32_t symp_exact_flow(const struct SympProblem *problem,
                        const double *q0,
                        const double *p0,
                        double t,
                        double *q,
                        double *p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYMPOCP_H */
