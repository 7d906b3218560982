/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef HYBRID_V2X_H
#define HYBRID_V2X_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum HvStatus {
  HV_STATUS_OK = 0,
  HV_STATUS_NULL_POINTER = 1,
  HV_STATUS_INVALID_ARGUMENT = 2,
  HV_STATUS_CONFIG = 3,
  HV_STATUS_IO = 4,
  HV_STATUS_WEIGHTS = 5,
  HV_STATUS_FAULT = 6,
  HV_STATUS_PANIC = 7,
} HvStatus;

typedef enum HvCongestion {
  HV_CONGESTION_LOW = 0,
  HV_CONGESTION_HIGH = 1,
} HvCongestion;

typedef enum HvSelector {
  HV_SELECTOR_DRL = 0,
  HV_SELECTOR_STATIC_G5 = 1,
  HV_SELECTOR_STATIC_LTE = 2,
  HV_SELECTOR_STATIC_REDUNDANT = 3,
  HV_SELECTOR_TOPSIS = 4,
} HvSelector;

/**
 * Opaque run configuration.
 */
typedef struct HvConfig HvConfig;

/**
 * Opaque trained Q-network.
 */
typedef struct HvQNetwork HvQNetwork;

/**
 * Aggregate of a set of games. `mode_pct` is indexed by mode code:
 * 0 single ITS-G5, 1 single LTE, 2 redundant, 3 division.
 */
typedef struct HvSummary {
  uint32_t games;
  double mean_prr;
  double std_prr;
  double mean_reward;
  double dup_pct;
  double mode_pct[4];
} HvSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * successful call. Valid until the next call on the same thread.
 */
const char *hv_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hv_version(void);

/**
 * Default configuration. Never null; release with [`hv_config_free`].
 */
struct HvConfig *hv_config_default(void);

/**
 * Parses a TOML configuration file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HvStatus hv_config_from_file(const char *path, struct HvConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be freed yet, or be null.
 */
void hv_config_free(struct HvConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum HvStatus hv_config_set_seed(struct HvConfig *cfg, uint64_t seed);

/**
 * Sets the training game count.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HvStatus hv_config_set_games(struct HvConfig *cfg, uint32_t games);

/**
 * Applies a background-traffic preset.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HvStatus hv_config_set_congestion(struct HvConfig *cfg, enum HvCongestion level);

/**
 * Plays `games` evaluation games with a selector. `weights_dir` holds
 * `weights-agent<k>.bin` files and may be null for non-DRL selectors.
 *
 * # Safety
 * `cfg` must be a live handle, `weights_dir` null or a NUL-terminated
 * string, `out` a valid pointer.
 */
enum HvStatus hv_evaluate(const struct HvConfig *cfg,
                          enum HvSelector selector,
                          const char *weights_dir,
                          uint32_t games,
                          struct HvSummary *out);

/**
 * Trains agents for the configured number of games and writes their
 * weights into `out_dir`, which must exist.
 *
 * # Safety
 * `cfg` must be a live handle, `out_dir` a NUL-terminated string, `out` a
 * valid pointer.
 */
enum HvStatus hv_train(const struct HvConfig *cfg, const char *out_dir, struct HvSummary *out);

/**
 * Loads a weight file written by training.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HvStatus hv_qnet_load(const char *path, struct HvQNetwork **out);

/**
 * # Safety
 * `net` must come from [`hv_qnet_load`] and not be freed yet, or be null.
 */
void hv_qnet_free(struct HvQNetwork *net);

/**
 * Writes the 4 Q-values of a 6-feature state.
 *
 * # Safety
 * `state` must point to 6 doubles and `out` to room for 4.
 */
enum HvStatus hv_qnet_q_values(const struct HvQNetwork *net, const double *state, double *out);

/**
 * Greedy mode code (0-3) for a 6-feature state.
 *
 * # Safety
 * `state` must point to 6 doubles and `out_mode` be a valid pointer.
 */
enum HvStatus hv_qnet_select(const struct HvQNetwork *net, const double *state, uint8_t *out_mode);

/**
 * Builds the 6-feature agent state. NaN SNIR or PRR inputs mean "not
 * observed yet" and map to the neutral feature value.
 *
 * # Safety
 * `out` must have room for 6 doubles.
 */
enum HvStatus hv_build_state(double snir_g5_db,
                             double snir_lte_db,
                             double prr_g5,
                             double prr_lte,
                             double latency_ms,
                             double reliability,
                             double *out);

/**
 * TOPSIS closeness. `matrix` is row-major `alternatives x criteria`;
 * `benefit[j]` is non-zero for benefit criteria and zero for cost
 * criteria; `out` receives one value per alternative.
 *
 * # Safety
 * All pointers must reference arrays of the stated sizes.
 */
enum HvStatus hv_topsis_rank(const double *matrix,
                             uintptr_t alternatives,
                             uintptr_t criteria,
                             const double *weights,
                             const uint8_t *benefit,
                             double *out);

/**
 * Per-game packet reception ratio: SR target over messages sent.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HvStatus hv_prr_game(uint32_t sr_target, uint64_t n_sent, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYBRID_V2X_H */
