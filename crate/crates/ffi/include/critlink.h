#ifndef CRITLINK_H
#define CRITLINK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Solver selection for [`critlink_solve`].
typedef enum CritlinkMethod {
  CRITLINK_METHOD_BRUTE = 0,
  CRITLINK_METHOD_TOPK = 1,
  CRITLINK_METHOD_ANNEAL_SWAP = 2,
  CRITLINK_METHOD_ANNEAL_PENALTY = 3,
} CritlinkMethod;

// Outcome of a call.
typedef enum CritlinkStatus {
  CRITLINK_STATUS_OK = 0,
  CRITLINK_STATUS_NULL_POINTER = 1,
  CRITLINK_STATUS_INVALID_ARGUMENT = 2,
  CRITLINK_STATUS_IO = 3,
  CRITLINK_STATUS_SOLVE_FAILED = 4,
  CRITLINK_STATUS_BUFFER_TOO_SMALL = 5,
  CRITLINK_STATUS_PANIC = 6,
} CritlinkStatus;

// A network with its snapshot series.
typedef struct CritlinkDataset CritlinkDataset;

// A penalty-folded QUBO for one time step.
typedef struct CritlinkProblem CritlinkProblem;

// A solved critical set.
typedef struct CritlinkResult CritlinkResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or NULL. The
// pointer stays valid until the next failing call on the same thread.
const char *critlink_last_error(void);

// Library version as a static NUL-terminated string.
const char *critlink_version(void);

// Generates a synthetic network.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum CritlinkStatus critlink_dataset_generate(size_t nodes,
                                              size_t links,
                                              size_t steps,
                                              uint64_t seed,
                                              struct CritlinkDataset **out);

// Loads an observation CSV (default column names, comma-delimited,
// forward-fill repair) or a directory written by `critlink ingest`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum CritlinkStatus critlink_dataset_load(const char *path, struct CritlinkDataset **out);

// # Safety
// `ds` must be NULL or a handle from this library, not yet freed.
void critlink_dataset_free(struct CritlinkDataset *ds);

// Number of links, or 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live handle.
size_t critlink_dataset_link_count(const struct CritlinkDataset *ds);

// Number of time steps, or 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live handle.
size_t critlink_dataset_step_count(const struct CritlinkDataset *ds);

// Writes the `index`-th time step value to `out`.
//
// # Safety
// `ds` must be a live handle and `out` writable.
enum CritlinkStatus critlink_dataset_time_step(const struct CritlinkDataset *ds,
                                               size_t index,
                                               uint32_t *out);

// Network delay index at `time_step` for the disruption vector `bits`
// (`len` bytes, nonzero meaning disrupted).
//
// # Safety
// `ds` must be a live handle, `bits` must point to `len` bytes, `out`
// must be writable.
enum CritlinkStatus critlink_dataset_ndi(const struct CritlinkDataset *ds,
                                         double gamma,
                                         uint32_t time_step,
                                         const uint8_t *bits,
                                         size_t len,
                                         double *out);

// Builds the problem for `k` disrupted links at `time_step`.
//
// # Safety
// `ds` must be a live handle and `out` writable.
enum CritlinkStatus critlink_problem_build(const struct CritlinkDataset *ds,
                                           uint32_t time_step,
                                           size_t k,
                                           double gamma,
                                           double safety_factor,
                                           struct CritlinkProblem **out);

// # Safety
// `p` must be NULL or a live handle.
void critlink_problem_free(struct CritlinkProblem *p);

// Number of variables, or 0 for NULL.
//
// # Safety
// `p` must be NULL or a live handle.
size_t critlink_problem_len(const struct CritlinkProblem *p);

// Penalty weight, or NaN for NULL.
//
// # Safety
// `p` must be NULL or a live handle.
double critlink_problem_lambda(const struct CritlinkProblem *p);

// Energy of `bits` (`len` bytes).
//
// # Safety
// `p` must be a live handle, `bits` must point to `len` bytes and `out`
// must be writable.
enum CritlinkStatus critlink_problem_energy(const struct CritlinkProblem *p,
                                            const uint8_t *bits,
                                            size_t len,
                                            double *out);

// Writes the problem in the plain-text QUBO format.
//
// # Safety
// `p` must be a live handle and `path` a NUL-terminated string.
enum CritlinkStatus critlink_problem_write(const struct CritlinkProblem *p, const char *path);

// Solves `p` with the default schedule for `method`, one of the
// `CritlinkMethod` values. Any other value yields `INVALID_ARGUMENT`.
//
// # Safety
// `p` must be a live handle and `out` writable.
enum CritlinkStatus critlink_solve(const struct CritlinkProblem *p,
                                   uint32_t method,
                                   uint64_t seed,
                                   struct CritlinkResult **out);

// # Safety
// `r` must be NULL or a live handle.
void critlink_result_free(struct CritlinkResult *r);

// Energy of the returned vector, or NaN for NULL.
//
// # Safety
// `r` must be NULL or a live handle.
double critlink_result_energy(const struct CritlinkResult *r);

// NDI increase over the undisrupted network, or NaN for NULL.
//
// # Safety
// `r` must be NULL or a live handle.
double critlink_result_gain(const struct CritlinkResult *r);

// Whether exactly `k` links are selected; false for NULL.
//
// # Safety
// `r` must be NULL or a live handle.
bool critlink_result_feasible(const struct CritlinkResult *r);

// Copies the selected link indices (increasing) into `buf`. `count`
// receives the number of selected links even when `cap` is too small, in
// which case nothing is copied and `BufferTooSmall` is returned.
//
// # Safety
// `r` must be a live handle, `buf` must have room for `cap` entries (may
// be NULL when `cap` is 0) and `count` must be writable.
enum CritlinkStatus critlink_result_selected(const struct CritlinkResult *r,
                                             size_t *buf,
                                             size_t cap,
                                             size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRITLINK_H */
