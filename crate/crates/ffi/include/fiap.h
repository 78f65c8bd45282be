#ifndef FIAP_H
#define FIAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum FiapStatus {
  FIAP_STATUS_OK = 0,
  // A required pointer argument was null.
  FIAP_STATUS_ERR_NULL = 1,
  // A string argument was not valid UTF-8.
  FIAP_STATUS_ERR_UTF8 = 2,
  // Configuration could not be parsed or is inconsistent.
  FIAP_STATUS_ERR_CONFIG = 3,
  // A parameter is out of its domain.
  FIAP_STATUS_ERR_INVALID = 4,
  // Exact enumeration would exceed its budget.
  FIAP_STATUS_ERR_BUDGET = 5,
  // The simulation produced a non-finite value or a bound violation.
  FIAP_STATUS_ERR_NUMERIC = 6,
  // Reading or writing files failed.
  FIAP_STATUS_ERR_IO = 7,
  // The output buffer is too small; the required length was written.
  FIAP_STATUS_ERR_BUFFER_TOO_SMALL = 8,
  // An index is out of range.
  FIAP_STATUS_ERR_RANGE = 9,
  // Internal panic caught at the boundary.
  FIAP_STATUS_ERR_PANIC = 10,
} FiapStatus;

// A δ-step chain.
typedef struct FiapChain FiapChain;

// A continuous-time model.
typedef struct FiapModel FiapModel;

// Piecewise-constant mean rates from the fixed-point solver.
typedef struct FiapRates FiapRates;

// Final state and event log of one replica run.
typedef struct FiapRmfRun FiapRmfRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *fiap_last_error(void);

void fiap_clear_error(void);

// Library version as a static NUL-terminated string.
const char *fiap_version(void);

// Parses a JSON model config.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum FiapStatus fiap_model_from_json(const char *json, struct FiapModel **out_model);

// # Safety
// `model` must come from [`fiap_model_from_json`] or be null.
void fiap_model_free(struct FiapModel *model);

// Number of nodes, or 0 for a null handle.
//
// # Safety
// `model` must be a live handle or null.
size_t fiap_model_nodes(const struct FiapModel *model);

// Runs the standing-assumption checks. `worst` receives 0 (pass), 1 (note),
// 2 (warn) or 3 (fail).
//
// # Safety
// `model` must be a live handle and `worst` a valid pointer.
enum FiapStatus fiap_model_validate(const struct FiapModel *model, uint32_t *worst);

// Simulates `replicas` interacting replicas on `[0, horizon]`.
//
// # Safety
// `model` must be a live handle and `out_run` a valid pointer.
enum FiapStatus fiap_rmf_simulate(const struct FiapModel *model,
                                  size_t replicas,
                                  double horizon,
                                  uint64_t seed,
                                  struct FiapRmfRun **out_run);

// # Safety
// `run` must come from [`fiap_rmf_simulate`] or be null.
void fiap_rmf_free(struct FiapRmfRun *run);

// Total departures and arrivals in the log.
//
// # Safety
// `run` must be a live handle; output pointers must be valid.
enum FiapStatus fiap_rmf_event_counts(const struct FiapRmfRun *run,
                                      size_t *departures,
                                      size_t *arrivals);

// Departures of node `i` in replica `m` up to time `t`.
//
// # Safety
// `run` must be a live handle and `count` a valid pointer.
enum FiapStatus fiap_rmf_departures(const struct FiapRmfRun *run,
                                    size_t m,
                                    size_t i,
                                    double t,
                                    size_t *count);

// Intensity of node `i` in replica `m` at the horizon.
//
// # Safety
// `run` must be a live handle and `value` a valid pointer.
enum FiapStatus fiap_rmf_final_intensity(const struct FiapRmfRun *run,
                                         size_t m,
                                         size_t i,
                                         double *value);

// Writes the event log as CSV.
//
// # Safety
// `run` must be a live handle and `path` a NUL-terminated string.
enum FiapStatus fiap_rmf_write_csv(const struct FiapRmfRun *run, const char *path);

// Solves the Poisson-Hypothesis fixed point on `cells` time cells.
// `converged` (optional) receives 1 when the stopping rule fired.
//
// # Safety
// `model` must be a live handle, `out_rates` a valid pointer and
// `converged` valid or null.
enum FiapStatus fiap_ph_solve(const struct FiapModel *model,
                              size_t cells,
                              double tol,
                              size_t max_iter,
                              size_t n_paths,
                              uint64_t seed,
                              struct FiapRates **out_rates,
                              int32_t *converged);

// # Safety
// `rates` must come from [`fiap_ph_solve`] or be null.
void fiap_rates_free(struct FiapRates *rates);

// 1 if the solve converged, 0 if not or for a null handle.
//
// # Safety
// `rates` must be a live handle or null.
int32_t fiap_rates_converged(const struct FiapRates *rates);

// Mean rate of `node` at time `t`.
//
// # Safety
// `rates` must be a live handle and `value` a valid pointer.
enum FiapStatus fiap_rates_at(const struct FiapRates *rates, size_t node, double t, double *value);

// Exact law of the Poisson-Hypothesis arrival count of `node` at `t`.
// Masses for `offset, offset + 1, …` go to `probs`; `len` receives the
// support length. With `capacity` too small nothing but `len` is written and
// `FIAP_STATUS_ERR_BUFFER_TOO_SMALL` is returned.
//
// # Safety
// Handles must be live; `probs` must hold `capacity` doubles (or be null
// when `capacity` is 0); `offset` and `len` must be valid.
enum FiapStatus fiap_ph_arrival_pmf(const struct FiapModel *model,
                                    const struct FiapRates *rates,
                                    size_t node,
                                    double t,
                                    int64_t *offset,
                                    double *probs,
                                    size_t capacity,
                                    size_t *len);

// Builds a δ-chain with `k` nodes. `mu` is `k*k`, row-major with sources
// as rows; `sigma` is the spike rate as an expression in `x`.
//
// # Safety
// `r` must hold `k` values, `mu` `k*k` values; `sigma` must be a
// NUL-terminated string and `out_chain` a valid pointer.
enum FiapStatus fiap_chain_new(size_t k,
                               const uint64_t *r,
                               const uint64_t *mu,
                               const char *sigma,
                               double delta,
                               struct FiapChain **out_chain);

// # Safety
// `chain` must come from [`fiap_chain_new`] or be null.
void fiap_chain_free(struct FiapChain *chain);

// Exact probability that coordinate `(m, i)` moves to `l` in one step from
// `state` (`replicas × k`, row-major by replica).
//
// # Safety
// `chain` must be a live handle, `state` must hold `replicas * k` values and
// `prob` must be valid.
enum FiapStatus fiap_chain_transition_prob(const struct FiapChain *chain,
                                           const uint64_t *state,
                                           size_t replicas,
                                           size_t m,
                                           size_t i,
                                           uint64_t l,
                                           double *prob);

// Runs an experiment from a config file. `mode` is one of `rmf-sim`,
// `ph-solve`, `compare`, `dfiap-validate`, `sweep-M`; `out_dir` may be null
// to keep the configured directory.
//
// # Safety
// `config_path` and `mode` must be NUL-terminated strings; `out_dir` must be
// one or null.
enum FiapStatus fiap_run_experiment(const char *config_path, const char *mode, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIAP_H */
