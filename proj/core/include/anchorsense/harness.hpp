// SPDX-License-Identifier: MIT
#pragma once

/**
 * @file harness.hpp
 * @brief Seeded Monte-Carlo sweeps over the full sensing pipeline.
 *
 * A sweep walks a grid along one axis (static SNR, anchor measurement
 * noise, target reflectivity), runs independently seeded trials per grid
 * point, aggregates empirical errors next to the closed-form predictions,
 * and emits long-format CSV plus a JSON manifest. Every output byte is a
 * function of (scenario, run configuration, base seed): per-trial seeds
 * derive from (base seed, point index, trial index), trials may execute on
 * worker threads, and aggregation is an order-independent reduction.
 */

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "anchorsense/io.hpp"
#include "anchorsense/sync.hpp"

namespace asense {

/// Quantity varied across grid points.
enum class SweepAxis {
  kNone,             ///< single point, grid ignored
  kSnrS,             ///< static SNR [dB]; sets the noise power accordingly
  kAnchorRangeRmse,  ///< anchor range noise std [m]; bypasses the waveform
  kAnchorAodRmse,    ///< anchor departure-angle noise std [deg]; bypasses
  kReflectivity,     ///< multiplier on every dynamic reflecting factor
};

/// How deep each trial runs.
enum class PipelineStages {
  kCoarseOnly,  ///< synthesis + coarse offset estimation
  kRefined,     ///< + refined offset estimation
  kFull,        ///< + static/dynamic estimation + localization
};

const char* to_string(SweepAxis axis);
const char* to_string(PipelineStages stages);
/// @throws ScenarioError for names outside
/// {none, snr_s, anchor_range_rmse, anchor_aod_rmse, reflectivity}
SweepAxis parse_sweep_axis(const std::string& name);
/// Parses a comma list of {coarse, refined, full}; the deepest named stage
/// wins, so "coarse,refined" runs through refinement.
/// @throws ScenarioError on unknown stage names or an empty list
PipelineStages parse_stages(const std::string& list);

struct RunConfig {
  std::string scenario_path;  ///< used by the file-loading overload
  SweepAxis sweep = SweepAxis::kNone;
  std::vector<double> grid;  ///< axis units; may be empty only for kNone
  int trials = 200;
  std::uint64_t base_seed = 1;
  std::string out_dir;  ///< empty: compute only, write nothing
  PipelineStages stages = PipelineStages::kFull;
  /// Worker threads; 0 consults the ANCHORSENSE_THREADS environment
  /// variable and falls back to 1.
  int threads = 0;
  /// Anchor measurement noise used by the bypass axes when not swept.
  double anchor_range_sigma_m = 0.01;
  double anchor_aod_sigma_deg = 0.02;
  /// Store per-symbol refined estimates and errors of every trial in the
  /// manifest (sizeable; meant for single-trial demo runs).
  bool record_sync_estimates = false;
};

/// One trial that threw: which stage, and what it said.
struct FailureRecord {
  int trial = 0;
  std::string stage;
  std::string message;
};

/// Per-symbol sync estimates and errors of one trial (manifest payload).
struct SyncTrialRecord {
  int trial = 0;
  std::vector<double> rtmo_s;       ///< estimated relative timing offsets
  std::vector<double> rcfo_rad;     ///< estimated relative carrier phases
  std::vector<double> rtmo_err_m;   ///< window-wrapped error, meters
  std::vector<double> rcfo_err_rad; ///< band-center phase error
};

/// Aggregates of one grid point.
struct PointResult {
  double grid_value = 0.0;
  int trials_requested = 0;
  int trials_succeeded = 0;  ///< trials that ran to the configured depth
  /// Metric name -> value. Names carry their unit suffix (_m, _deg, _hz,
  /// _rad, _db, _frac); theoretical predictions use a theory_ prefix.
  std::map<std::string, double> metrics;
  /// Trials contributing to each metric (partial trials keep the metrics
  /// of the stages they completed).
  std::map<std::string, int> metric_trials;
  std::vector<FailureRecord> failures;
  std::vector<SyncTrialRecord> sync_records;  ///< when recording is enabled

  double failure_rate() const {
    return trials_requested > 0
               ? static_cast<double>(failures.size()) / trials_requested
               : 0.0;
  }
};

/// Everything a sweep produced, file contents included.
struct SweepResult {
  RunConfig config;         ///< as executed (thread count resolved)
  ScenarioConfig scenario;  ///< as loaded, before axis adjustments
  std::vector<PointResult> points;

  /// Long-format rows (metric, grid_value, value, trials, seed), points in
  /// grid order and metrics in name order.
  std::vector<MetricRow> rows() const;
};

/// Drop-in replacement for the two-stage offset estimator, for comparing
/// alternative synchronization algorithms under identical trials. Receives
/// the raw CSI of one trial and returns combined relative-offset estimates.
/// None ships with the library.
using SyncBaseline = std::function<SyncEstimate(const CsiTensor&)>;

struct RunHooks {
  SyncBaseline sync_baseline;  ///< empty: use the built-in estimator
};

/**
 * @brief Runs the configured sweep over an already-loaded scenario.
 *
 * Per grid point, per trial: derive the seed, build paths and clock, and
 * execute synthesis -> coarse sync -> refined sync -> static/dynamic
 * estimation -> localization as far as the stage toggle allows. The two
 * anchor-noise axes skip the waveform entirely and feed ideally measured
 * anchors, perturbed by Gaussian noise, straight to the localizer (their
 * theory column comes from the first-order covariance). A trial that
 * throws becomes a FailureRecord; its completed stages still count.
 *
 * With out_dir set, writes metrics.csv and manifest.json there.
 *
 * @throws ScenarioError for invalid run configurations
 */
SweepResult run_sweep(const ScenarioConfig& scenario, const RunConfig& config,
                      const RunHooks& hooks = {});

/// Loads config.scenario_path, then runs the sweep.
SweepResult run_sweep(const RunConfig& config, const RunHooks& hooks = {});

/**
 * @brief Theoretical prediction rows only, no simulation.
 *
 * Emits the same theory_ metrics a full sweep would produce: refined-stage
 * offset error statistics (averaged over the per-trial path realizations
 * the sweep would draw) and, for the anchor-noise axes, the localization
 * covariance prediction.
 */
std::vector<MetricRow> theory_rows(const ScenarioConfig& scenario,
                                   const RunConfig& config);

/// One empirical/theoretical pairing of a point.
struct TheoryComparison {
  std::string metric;        ///< empirical metric name
  double empirical = 0.0;
  double theoretical = 0.0;
  double ratio = 0.0;        ///< empirical / theoretical
  bool pass = false;         ///< ratio within [lo, hi]
  std::string note;          ///< set when the pairing is incomplete
};

/// Pairs every theory_X metric of the point with its empirical X and
/// gates the ratio. Theory metrics without an empirical partner (or vice
/// versa, for metrics that have predictions in other configurations) yield
/// a skipped entry with a note instead of a pass/fail.
std::vector<TheoryComparison> compare_theory(const PointResult& point,
                                             double ratio_lo = 0.8,
                                             double ratio_hi = 1.25);

/// Resolves a worker count: positive requests pass through, otherwise the
/// ANCHORSENSE_THREADS environment variable applies, else 1.
int resolve_threads(int requested);

/// Scenario with one sweep-axis value applied (noise power for kSnrS,
/// reflecting factors for kReflectivity; other axes return it unchanged).
ScenarioConfig apply_axis(ScenarioConfig scenario, SweepAxis axis,
                          double value);

/// Deterministic static-path power sum_l |xi_l|^2 over zero-Doppler paths
/// (anchors, unknown statics, line of sight). Defines the noise power for a
/// requested static SNR: sigma_n^2 = static_path_power / 10^(SNR/10).
double static_path_power(const Scene& scene);

}  // namespace asense
