// SPDX-License-Identifier: MIT

/**
 * @file harness.cpp
 * @brief Monte-Carlo sweep execution, aggregation and artifact emission.
 */

#include "anchorsense/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <utility>

#include <json.hpp>

#include "anchorsense/channel.hpp"
#include "anchorsense/estimate.hpp"
#include "anchorsense/locate.hpp"
#include "anchorsense/scene.hpp"

namespace asense {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kRadToDeg = 180.0 / kPi;
/// Antenna pairs averaged by the offset estimators (their default).
constexpr int kSyncPairs = 4;

enum class Kind { kRmse, kMean, kMeanSem };

struct Sample {
  Kind kind;
  const char* name;  ///< final metric name (kMeanSem: the _mean_ name)
  double value;
};

/// Everything one trial contributes to the reduction.
struct TrialOutcome {
  bool ok = false;
  std::string stage;    ///< set when the trial threw
  std::string message;  ///< set when the trial threw
  std::vector<Sample> samples;
  SyncTrialRecord sync;
  bool has_sync = false;
};

/// Ground truth of one trial, shared by several metric computations.
struct TrialTruth {
  std::vector<PathParams> paths;
  ClockSequence clock;
  SyncEstimate relative;  ///< true relative offsets
  double ctau_o0_m = 0.0; ///< common range bias c*tau_{o,0}
};

SyncEstimate truth_estimate(const ClockSequence& clock) {
  SyncEstimate est;
  est.rtmo_s = clock.relative_tmo();
  est.rcfo_rad = clock.relative_cfo();
  est.stage = SyncStage::kRefined;
  return est;
}

/// Window-wrapped per-symbol offset errors against the truth, pushed as
/// RMSE samples under the given metric names.
void push_sync_errors(TrialOutcome& out, const SyncEstimate& est,
                      const SyncEstimate& truth, const Waveform& wf,
                      const char* rtmo_name, const char* rcfo_name,
                      SyncTrialRecord* record) {
  const int n_ref = wf.n_subcarriers / 2;
  for (int k = 1; k < wf.n_symbols; ++k) {
    const double dt =
        wrap_to_half(est.rtmo_s[k] - truth.rtmo_s[k], wf.max_delay_s());
    const double dc =
        wrap_angle(phase_at_subcarrier(est, wf.delta_f_hz, n_ref, k) -
                   phase_at_subcarrier(truth, wf.delta_f_hz, n_ref, k));
    out.samples.push_back({Kind::kRmse, rtmo_name, dt * kSpeedOfLight});
    out.samples.push_back({Kind::kRmse, rcfo_name, dc});
    if (record != nullptr) {
      record->rtmo_err_m.push_back(dt * kSpeedOfLight);
      record->rcfo_err_rad.push_back(dc);
    }
  }
  if (record != nullptr) {
    record->rtmo_s = est.rtmo_s;
    record->rcfo_rad = est.rcfo_rad;
  }
}

/// Truth parameters of the paths of one kind, in source order.
std::vector<const PathParams*> paths_of_kind(const std::vector<PathParams>& paths,
                                             PathKind kind) {
  std::vector<const PathParams*> out;
  for (const PathParams& p : paths)
    if (p.kind == kind) out.push_back(&p);
  std::sort(out.begin(), out.end(),
            [](const PathParams* a, const PathParams* b) {
              return a->source_index < b->source_index;
            });
  return out;
}

/// Greedy truth-to-detection matching on the range-Doppler plane, gated at
/// three resolution cells. Returns per-truth detection index or -1.
std::vector<int> match_dynamics(const std::vector<const PathParams*>& truth,
                                const std::vector<DynamicMeasurement>& found,
                                double ctau_o0_m, const Waveform& wf) {
  const double range_cell =
      kSpeedOfLight / (wf.n_subcarriers * wf.delta_f_hz);
  const double doppler_cell = 1.0 / (wf.n_symbols * wf.t0_s);
  struct Pair {
    double cost;
    int t, d;
  };
  std::vector<Pair> pairs;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    const double r_true = truth[t]->delay_s * kSpeedOfLight + ctau_o0_m;
    for (std::size_t d = 0; d < found.size(); ++d) {
      const double dr = (found[d].relative_range_m - r_true) / range_cell;
      const double df = (found[d].doppler_hz - truth[t]->doppler_hz) / doppler_cell;
      if (std::abs(dr) > 3.0 || std::abs(df) > 3.0) continue;
      pairs.push_back({dr * dr + df * df, static_cast<int>(t), static_cast<int>(d)});
    }
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const Pair& a, const Pair& b) { return a.cost < b.cost; });
  std::vector<int> match(truth.size(), -1);
  std::vector<bool> used(found.size(), false);
  for (const Pair& p : pairs) {
    if (match[p.t] != -1 || used[p.d]) continue;
    match[p.t] = p.d;
    used[p.d] = true;
  }
  return match;
}

/// One full-pipeline trial (axes kNone, kSnrS, kReflectivity).
TrialOutcome run_pipeline_trial(const ScenarioConfig& sc,
                                PipelineStages stages, std::uint64_t seed,
                                const RunHooks& hooks, bool record_sync) {
  TrialOutcome out;
  std::string stage = "derive";
  try {
    const Waveform& wf = sc.waveform;
    Rng rng(seed);
    TrialTruth truth;
    truth.paths = derive_paths(sc.scene, rng);
    truth.clock = sample_clock(rng, wf.n_symbols, sc.clock);
    truth.relative = truth_estimate(truth.clock);
    truth.ctau_o0_m = truth.clock.tmo_s[0] * kSpeedOfLight;

    const Eigen::MatrixXcd h_static = static_amplitudes(truth.paths, wf);
    const int sync_pairs = std::min(kSyncPairs, wf.pair_count());
    out.samples.push_back({Kind::kMean, "snr_s_db",
                           snr_static_db(h_static, sc.noise_sigma_sq)});

    stage = "synthesize";
    SynthesisOptions options;
    options.allow_delay_alias = sc.allow_delay_alias;
    if (stages != PipelineStages::kFull) options.n_pairs = sync_pairs;
    const CsiTensor csi = synthesize_csi(truth.paths, truth.clock, wf,
                                         NoiseModel{sc.noise_sigma_sq}, rng,
                                         options);

    stage = "sync_coarse";
    SyncTrialRecord* rec = record_sync ? &out.sync : nullptr;
    out.has_sync = record_sync;
    SyncEstimate final_est;
    if (hooks.sync_baseline) {
      final_est = hooks.sync_baseline(csi);
      push_sync_errors(out, final_est, truth.relative, wf,
                       "rtmo_refined_rmse_m", "rcfo_refined_rmse_rad", rec);
    } else {
      const SyncEstimate coarse = coarse_estimate(csi, sync_pairs);
      push_sync_errors(out, coarse, truth.relative, wf, "rtmo_coarse_rmse_m",
                       "rcfo_coarse_rmse_rad",
                       stages == PipelineStages::kCoarseOnly ? rec : nullptr);
      final_est = coarse;
      if (stages != PipelineStages::kCoarseOnly) {
        stage = "sync_refine";
        const CsiTensor comp = compensate(csi, coarse);
        const SyncEstimate residual = refine_estimate(comp, sync_pairs);
        final_est = combine(coarse, residual);
        push_sync_errors(out, final_est, truth.relative, wf,
                         "rtmo_refined_rmse_m", "rcfo_refined_rmse_rad", rec);
        out.samples.push_back({Kind::kMean, "refine_converged_frac",
                               residual.converged ? 1.0 : 0.0});
        const TheoreticalErrorPrediction pred = predict_error_combined(
            h_static.leftCols(sync_pairs), sc.noise_sigma_sq);
        out.samples.push_back(
            {Kind::kRmse, "theory_rtmo_refined_rmse_m",
             pred.rtmo_error_std_seconds(wf.delta_f_hz) * kSpeedOfLight});
        out.samples.push_back(
            {Kind::kRmse, "theory_rcfo_refined_rmse_rad", pred.rcfo_error_std});
      }
    }
    if (stages != PipelineStages::kFull) {
      out.ok = true;
      return out;
    }

    stage = "estimate_static";
    const CsiTensor compensated = compensate(csi, final_est);
    const StaticSnapshots zd = extract_zero_doppler(compensated);
    const auto anchor_paths = paths_of_kind(truth.paths, PathKind::Anchor);
    std::vector<double> anchor_aoa;
    anchor_aoa.reserve(anchor_paths.size());
    for (const PathParams* p : anchor_paths) anchor_aoa.push_back(p->aoa_rad);
    AnchorIdentifyParams anchor_params;
    anchor_params.music.n_sources =
        static_cast<int>(truth.paths.size() - sc.scene.dynamic_targets.size());
    const std::vector<AnchorMeasurement> anchors_found =
        identify_anchors(zd, anchor_aoa, anchor_params);

    double bias_sum = 0.0;
    for (const AnchorMeasurement& m : anchors_found) {
      const PathParams* p = anchor_paths[m.anchor_index];
      const double r_true = p->delay_s * kSpeedOfLight + truth.ctau_o0_m;
      out.samples.push_back(
          {Kind::kRmse, "anchor_range_rmse_m", m.relative_range_m - r_true});
      out.samples.push_back({Kind::kRmse, "anchor_aod_rmse_deg",
                             wrap_angle(m.aod_rad - p->aod_rad) * kRadToDeg});
      bias_sum += m.relative_range_m - p->delay_s * kSpeedOfLight;
    }
    if (!anchors_found.empty()) {
      const double bias = bias_sum / anchors_found.size();
      out.samples.push_back({Kind::kMeanSem, "range_bias_mean_m", bias});
      out.samples.push_back(
          {Kind::kMeanSem, "range_bias_err_mean_m", bias - truth.ctau_o0_m});
    }

    stage = "estimate_dynamic";
    const auto dynamic_paths = paths_of_kind(truth.paths, PathKind::Dynamic);
    DynamicDetections detections;
    std::vector<int> match;
    if (!dynamic_paths.empty()) {
      const CsiTensor filtered = doppler_filter(compensated);
      DynamicEstimateParams dyn_params;
      dyn_params.n_targets = static_cast<int>(dynamic_paths.size());
      detections = estimate_dynamic(filtered, dyn_params);
      match = match_dynamics(dynamic_paths, detections.targets,
                             truth.ctau_o0_m, wf);
      for (std::size_t t = 0; t < dynamic_paths.size(); ++t) {
        out.samples.push_back({Kind::kMean, "dynamic_miss_frac",
                               match[t] == -1 ? 1.0 : 0.0});
        if (match[t] == -1) continue;
        const DynamicMeasurement& m = detections.targets[match[t]];
        const PathParams* p = dynamic_paths[t];
        const double r_true = p->delay_s * kSpeedOfLight + truth.ctau_o0_m;
        out.samples.push_back(
            {Kind::kRmse, "dynamic_range_rmse_m", m.relative_range_m - r_true});
        out.samples.push_back({Kind::kRmse, "dynamic_aoa_rmse_deg",
                               wrap_angle(m.aoa_rad - p->aoa_rad) * kRadToDeg});
        out.samples.push_back({Kind::kRmse, "dynamic_doppler_rmse_hz",
                               m.doppler_hz - p->doppler_hz});
      }
    }

    stage = "locate";
    std::vector<KnownAnchor> known;
    known.reserve(sc.scene.anchors.size());
    for (const AnchorPoint& a : sc.scene.anchors)
      known.push_back(known_anchor(a.position, sc.scene.bs_position));
    const LocalizationSolution sol = locate_ue(anchors_found, known);
    if (!sol.converged)
      throw EstimationError("localization did not converge");
    const double dx = sol.ue_position.x - sc.scene.ue_position.x;
    const double dy = sol.ue_position.y - sc.scene.ue_position.y;
    out.samples.push_back({Kind::kRmse, "ue_rmse_m", std::hypot(dx, dy)});
    out.samples.push_back(
        {Kind::kRmse, "rho_rmse_deg",
         wrap_angle(sol.rho_rad - sc.scene.ue_rotation_rho) * kRadToDeg});
    out.samples.push_back(
        {Kind::kRmse, "ctau_o0_rmse_m",
         (sol.tau_o0_s - truth.clock.tmo_s[0]) * kSpeedOfLight});

    if (!dynamic_paths.empty()) {
      const std::vector<TargetPosition> placed =
          locate_dynamic(sol, detections.targets);
      for (std::size_t t = 0; t < dynamic_paths.size(); ++t) {
        if (match[t] == -1) continue;
        const TargetPosition& tp = placed[match[t]];
        out.samples.push_back({Kind::kMean, "target_locatable_frac",
                               tp.locatable ? 1.0 : 0.0});
        if (!tp.locatable) continue;
        const Position2D q =
            sc.scene.dynamic_targets[dynamic_paths[t]->source_index].position;
        out.samples.push_back(
            {Kind::kRmse, "target_pos_rmse_m",
             std::hypot(tp.position.x - q.x, tp.position.y - q.y)});
      }
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.stage = stage;
    out.message = e.what();
  }
  return out;
}

/// One localization-only trial: ideal anchor measurements plus Gaussian
/// noise (per anchor: one range draw, then one angle draw).
TrialOutcome run_bypass_trial(const ScenarioConfig& sc, double range_sigma_m,
                              double aod_sigma_rad, std::uint64_t seed) {
  TrialOutcome out;
  try {
    std::vector<Position2D> anchor_pos;
    std::vector<KnownAnchor> known;
    for (const AnchorPoint& a : sc.scene.anchors) {
      anchor_pos.push_back(a.position);
      known.push_back(known_anchor(a.position, sc.scene.bs_position));
    }
    const double tau0 = sc.clock.pin_tmo0_s.value_or(0.0);
    std::vector<AnchorMeasurement> meas = ideal_anchor_measurements(
        sc.scene.ue_position, sc.scene.ue_rotation_rho, tau0, anchor_pos,
        sc.scene.bs_position);
    Rng rng(seed);
    for (AnchorMeasurement& m : meas) {
      m.relative_range_m += range_sigma_m * rng.normal();
      m.aod_rad = wrap_angle(m.aod_rad + aod_sigma_rad * rng.normal());
    }
    const LocalizationSolution sol = locate_ue(meas, known);
    if (!sol.converged)
      throw EstimationError("localization did not converge");
    const double dx = sol.ue_position.x - sc.scene.ue_position.x;
    const double dy = sol.ue_position.y - sc.scene.ue_position.y;
    out.samples.push_back({Kind::kRmse, "ue_rmse_m", std::hypot(dx, dy)});
    out.samples.push_back(
        {Kind::kRmse, "rho_rmse_deg",
         wrap_angle(sol.rho_rad - sc.scene.ue_rotation_rho) * kRadToDeg});
    out.samples.push_back(
        {Kind::kRmse, "ctau_o0_rmse_m", (sol.tau_o0_s - tau0) * kSpeedOfLight});
    out.ok = true;
  } catch (const std::exception& e) {
    out.stage = "locate";
    out.message = e.what();
  }
  return out;
}

/// Noise levels the bypass axes use at one grid point.
std::pair<double, double> bypass_sigmas(const RunConfig& config,
                                        SweepAxis axis, double value) {
  double range_sigma_m = config.anchor_range_sigma_m;
  double aod_sigma_rad = config.anchor_aod_sigma_deg / kRadToDeg;
  if (axis == SweepAxis::kAnchorRangeRmse) range_sigma_m = value;
  if (axis == SweepAxis::kAnchorAodRmse) aod_sigma_rad = value / kRadToDeg;
  return {range_sigma_m, aod_sigma_rad};
}

/// Localization covariance prediction at the noise-free solution.
std::map<std::string, double> bypass_theory(const ScenarioConfig& sc,
                                            double range_sigma_m,
                                            double aod_sigma_rad) {
  std::vector<Position2D> anchor_pos;
  std::vector<KnownAnchor> known;
  for (const AnchorPoint& a : sc.scene.anchors) {
    anchor_pos.push_back(a.position);
    known.push_back(known_anchor(a.position, sc.scene.bs_position));
  }
  const double tau0 = sc.clock.pin_tmo0_s.value_or(0.0);
  const std::vector<AnchorMeasurement> ideal = ideal_anchor_measurements(
      sc.scene.ue_position, sc.scene.ue_rotation_rho, tau0, anchor_pos,
      sc.scene.bs_position);
  const LocalizationSolution sol = locate_ue(ideal, known);
  const Eigen::MatrixXd cov = predict_covariance(
      sol, ideal, known, MeasurementNoise{range_sigma_m, aod_sigma_rad});
  return {{"theory_ue_rmse_m", std::sqrt(cov(0, 0) + cov(1, 1))},
          {"theory_rho_rmse_deg", std::sqrt(cov(2, 2)) * kRadToDeg}};
}

/// Order-independent reduction of the trial outcomes of one point.
PointResult reduce_point(double grid_value,
                         std::vector<TrialOutcome>&& outcomes) {
  PointResult point;
  point.grid_value = grid_value;
  point.trials_requested = static_cast<int>(outcomes.size());

  struct Accum {
    Kind kind = Kind::kRmse;
    double sum = 0.0;
    double sum_sq = 0.0;
    long samples = 0;
    int trials = 0;
    int last_trial = -1;
  };
  std::map<std::string, Accum> accum;
  for (int t = 0; t < static_cast<int>(outcomes.size()); ++t) {
    TrialOutcome& out = outcomes[t];
    if (out.ok) {
      ++point.trials_succeeded;
    } else {
      point.failures.push_back({t, out.stage, out.message});
    }
    for (const Sample& s : out.samples) {
      Accum& a = accum[s.name];
      a.kind = s.kind;
      a.sum += s.value;
      a.sum_sq += s.value * s.value;
      ++a.samples;
      if (a.last_trial != t) {
        a.last_trial = t;
        ++a.trials;
      }
    }
    if (out.has_sync) {
      out.sync.trial = t;
      point.sync_records.push_back(std::move(out.sync));
    }
  }
  for (const auto& [name, a] : accum) {
    const double mean = a.sum / a.samples;
    switch (a.kind) {
      case Kind::kRmse:
        point.metrics[name] = std::sqrt(a.sum_sq / a.samples);
        point.metric_trials[name] = a.trials;
        break;
      case Kind::kMean:
        point.metrics[name] = mean;
        point.metric_trials[name] = a.trials;
        break;
      case Kind::kMeanSem: {
        point.metrics[name] = mean;
        point.metric_trials[name] = a.trials;
        std::string sem_name = name;
        sem_name.replace(sem_name.rfind("_mean_"), 6, "_sem_");
        const double var = std::max(0.0, a.sum_sq / a.samples - mean * mean);
        point.metrics[sem_name] = std::sqrt(var / a.samples);
        point.metric_trials[sem_name] = a.trials;
        break;
      }
    }
  }
  point.metrics["failure_rate_frac"] = point.failure_rate();
  point.metric_trials["failure_rate_frac"] = point.trials_requested;
  return point;
}

/// Grid as iterated: the no-sweep axis gets a single placeholder point.
std::vector<double> effective_grid(const RunConfig& config) {
  if (config.sweep == SweepAxis::kNone)
    return config.grid.empty() ? std::vector<double>{0.0} : config.grid;
  return config.grid;
}

void validate(const RunConfig& config) {
  if (config.trials < 1) throw ScenarioError("trials must be >= 1");
  if (config.sweep != SweepAxis::kNone && config.grid.empty())
    throw ScenarioError("sweep over " + std::string(to_string(config.sweep)) +
                        " needs a non-empty grid");
}

ordered_json config_json(const RunConfig& config) {
  return {{"scenario_path", config.scenario_path},
          {"sweep", to_string(config.sweep)},
          {"grid", config.grid},
          {"trials", config.trials},
          {"base_seed", config.base_seed},
          {"out_dir", config.out_dir},
          {"stages", to_string(config.stages)},
          {"threads", config.threads},
          {"anchor_range_sigma_m", config.anchor_range_sigma_m},
          {"anchor_aod_sigma_deg", config.anchor_aod_sigma_deg},
          {"record_sync_estimates", config.record_sync_estimates}};
}

void write_artifacts(const SweepResult& result) {
  const std::string dir = result.config.out_dir;
  write_metrics_csv(dir + "/metrics.csv", result.rows());

  ordered_json manifest;
  manifest["version"] = library_version();
  manifest["config"] = config_json(result.config);
  manifest["scenario"] = ordered_json::parse(scenario_to_json(result.scenario));
  manifest["points"] = ordered_json::array();
  for (const PointResult& p : result.points) {
    ordered_json point = {{"grid_value", p.grid_value},
                          {"trials_requested", p.trials_requested},
                          {"trials_succeeded", p.trials_succeeded},
                          {"failure_rate", p.failure_rate()}};
    point["metrics"] = ordered_json::object();
    for (const auto& [name, value] : p.metrics) {
      point["metrics"][name] = {{"value", value},
                                {"trials", p.metric_trials.at(name)}};
    }
    point["failures"] = ordered_json::array();
    for (const FailureRecord& f : p.failures)
      point["failures"].push_back(
          {{"trial", f.trial}, {"stage", f.stage}, {"message", f.message}});
    if (!p.sync_records.empty()) {
      point["sync_records"] = ordered_json::array();
      for (const SyncTrialRecord& r : p.sync_records)
        point["sync_records"].push_back({{"trial", r.trial},
                                         {"rtmo_s", r.rtmo_s},
                                         {"rcfo_rad", r.rcfo_rad},
                                         {"rtmo_err_m", r.rtmo_err_m},
                                         {"rcfo_err_rad", r.rcfo_err_rad}});
    }
    manifest["points"].push_back(point);
  }
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kNone: return "none";
    case SweepAxis::kSnrS: return "snr_s";
    case SweepAxis::kAnchorRangeRmse: return "anchor_range_rmse";
    case SweepAxis::kAnchorAodRmse: return "anchor_aod_rmse";
    case SweepAxis::kReflectivity: return "reflectivity";
  }
  return "none";
}

const char* to_string(PipelineStages stages) {
  switch (stages) {
    case PipelineStages::kCoarseOnly: return "coarse";
    case PipelineStages::kRefined: return "refined";
    case PipelineStages::kFull: return "full";
  }
  return "full";
}

SweepAxis parse_sweep_axis(const std::string& name) {
  for (SweepAxis axis :
       {SweepAxis::kNone, SweepAxis::kSnrS, SweepAxis::kAnchorRangeRmse,
        SweepAxis::kAnchorAodRmse, SweepAxis::kReflectivity})
    if (name == to_string(axis)) return axis;
  throw ScenarioError("unknown sweep axis: " + name);
}

PipelineStages parse_stages(const std::string& list) {
  PipelineStages deepest = PipelineStages::kCoarseOnly;
  bool any = false;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = list.find(',', start);
    const std::string item =
        list.substr(start, comma == std::string::npos ? std::string::npos
                                                      : comma - start);
    if (!item.empty()) {
      any = true;
      if (item == "coarse") {
      } else if (item == "refined") {
        deepest = std::max(deepest, PipelineStages::kRefined);
      } else if (item == "full") {
        deepest = std::max(deepest, PipelineStages::kFull);
      } else {
        throw ScenarioError("unknown pipeline stage: " + item);
      }
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (!any) throw ScenarioError("empty pipeline stage list");
  return deepest;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ANCHORSENSE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

double static_path_power(const Scene& scene) {
  Rng rng(0);  // phases are irrelevant, magnitudes are deterministic
  const std::vector<PathParams> paths = derive_paths(scene, rng);
  double power = 0.0;
  for (const PathParams& p : paths)
    if (p.kind != PathKind::Dynamic) power += std::norm(p.coeff);
  return power;
}

ScenarioConfig apply_axis(ScenarioConfig scenario, SweepAxis axis,
                          double value) {
  switch (axis) {
    case SweepAxis::kSnrS:
      scenario.noise_sigma_sq =
          static_path_power(scenario.scene) / std::pow(10.0, value / 10.0);
      break;
    case SweepAxis::kReflectivity:
      if (value <= 0.0)
        throw ScenarioError("reflectivity multiplier must be positive");
      for (DynamicTarget& t : scenario.scene.dynamic_targets)
        t.reflecting_factor *= value;
      break;
    default:
      break;
  }
  return scenario;
}

std::vector<MetricRow> SweepResult::rows() const {
  std::vector<MetricRow> out;
  for (const PointResult& p : points)
    for (const auto& [name, value] : p.metrics)
      out.push_back({name, p.grid_value, value, p.metric_trials.at(name),
                     config.base_seed});
  return out;
}

SweepResult run_sweep(const ScenarioConfig& scenario, const RunConfig& config,
                      const RunHooks& hooks) {
  validate(config);
  SweepResult result;
  result.config = config;
  result.config.threads = resolve_threads(config.threads);
  result.scenario = scenario;

  const std::vector<double> grid = effective_grid(config);
  const bool bypass = config.sweep == SweepAxis::kAnchorRangeRmse ||
                      config.sweep == SweepAxis::kAnchorAodRmse;
  for (std::size_t pi = 0; pi < grid.size(); ++pi) {
    const double value = grid[pi];
    const ScenarioConfig sc =
        bypass ? scenario : apply_axis(scenario, config.sweep, value);
    const auto [range_sigma_m, aod_sigma_rad] =
        bypass_sigmas(config, config.sweep, value);

    std::vector<TrialOutcome> outcomes(config.trials);
    const auto run_one = [&](int t) {
      const std::uint64_t seed =
          derive_seed(config.base_seed, static_cast<std::uint64_t>(pi),
                      static_cast<std::uint64_t>(t));
      outcomes[t] = bypass ? run_bypass_trial(sc, range_sigma_m,
                                              aod_sigma_rad, seed)
                           : run_pipeline_trial(sc, config.stages, seed, hooks,
                                                config.record_sync_estimates);
    };
    if (result.config.threads <= 1) {
      for (int t = 0; t < config.trials; ++t) run_one(t);
    } else {
      std::atomic<int> next{0};
      std::vector<std::thread> pool;
      const int workers = std::min(result.config.threads, config.trials);
      pool.reserve(workers);
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (int t = next.fetch_add(1); t < config.trials;
               t = next.fetch_add(1))
            run_one(t);
        });
      for (std::thread& th : pool) th.join();
    }

    PointResult point = reduce_point(value, std::move(outcomes));
    if (bypass) {
      for (const auto& [name, v] :
           bypass_theory(sc, range_sigma_m, aod_sigma_rad)) {
        point.metrics[name] = v;
        point.metric_trials[name] = point.trials_requested;
      }
    }
    result.points.push_back(std::move(point));
  }

  if (!result.config.out_dir.empty()) write_artifacts(result);
  return result;
}

SweepResult run_sweep(const RunConfig& config, const RunHooks& hooks) {
  return run_sweep(load_scenario(config.scenario_path), config, hooks);
}

std::vector<MetricRow> theory_rows(const ScenarioConfig& scenario,
                                   const RunConfig& config) {
  validate(config);
  std::vector<MetricRow> rows;
  const std::vector<double> grid = effective_grid(config);
  const bool bypass = config.sweep == SweepAxis::kAnchorRangeRmse ||
                      config.sweep == SweepAxis::kAnchorAodRmse;
  for (std::size_t pi = 0; pi < grid.size(); ++pi) {
    const double value = grid[pi];
    if (bypass) {
      const auto [range_sigma_m, aod_sigma_rad] =
          bypass_sigmas(config, config.sweep, value);
      for (const auto& [name, v] :
           bypass_theory(scenario, range_sigma_m, aod_sigma_rad))
        rows.push_back({name, value, v, config.trials, config.base_seed});
      continue;
    }
    const ScenarioConfig sc = apply_axis(scenario, config.sweep, value);
    const Waveform& wf = sc.waveform;
    const int sync_pairs = std::min(kSyncPairs, wf.pair_count());
    double var_rtmo = 0.0, var_rcfo = 0.0;
    for (int t = 0; t < config.trials; ++t) {
      // Same path realizations the sweep's trials would draw.
      Rng rng(derive_seed(config.base_seed, static_cast<std::uint64_t>(pi),
                          static_cast<std::uint64_t>(t)));
      const std::vector<PathParams> paths = derive_paths(sc.scene, rng);
      const Eigen::MatrixXcd h = static_amplitudes(paths, wf);
      const TheoreticalErrorPrediction pred =
          predict_error_combined(h.leftCols(sync_pairs), sc.noise_sigma_sq);
      const double rtmo_m =
          pred.rtmo_error_std_seconds(wf.delta_f_hz) * kSpeedOfLight;
      var_rtmo += rtmo_m * rtmo_m;
      var_rcfo += pred.rcfo_error_std * pred.rcfo_error_std;
    }
    rows.push_back({"theory_rtmo_refined_rmse_m", value,
                    std::sqrt(var_rtmo / config.trials), config.trials,
                    config.base_seed});
    rows.push_back({"theory_rcfo_refined_rmse_rad", value,
                    std::sqrt(var_rcfo / config.trials), config.trials,
                    config.base_seed});
  }
  return rows;
}

std::vector<TheoryComparison> compare_theory(const PointResult& point,
                                             double ratio_lo,
                                             double ratio_hi) {
  std::vector<TheoryComparison> report;
  for (const auto& [name, value] : point.metrics) {
    if (name.rfind("theory_", 0) == 0) {
      if (point.metrics.find(name.substr(7)) == point.metrics.end()) {
        TheoryComparison c;
        c.metric = name.substr(7);
        c.theoretical = value;
        c.note = "no empirical counterpart";
        report.push_back(std::move(c));
      }
      continue;
    }
    if (name.find("_rmse_") == std::string::npos) continue;
    TheoryComparison c;
    c.metric = name;
    c.empirical = value;
    const auto theory = point.metrics.find("theory_" + name);
    if (theory == point.metrics.end()) {
      c.note = "no theoretical prediction";
    } else {
      c.theoretical = theory->second;
      if (c.theoretical > 0.0) {
        c.ratio = c.empirical / c.theoretical;
        c.pass = c.ratio >= ratio_lo && c.ratio <= ratio_hi;
      } else {
        c.note = "non-positive theoretical value";
        c.pass = c.empirical == 0.0;
      }
    }
    report.push_back(std::move(c));
  }
  return report;
}

}  // namespace asense
