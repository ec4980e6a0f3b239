// SPDX-License-Identifier: MIT
#pragma once

/**
 * @file io.hpp
 * @brief Scenario files, CSI dumps and run artifacts.
 *
 * Scenario descriptions are JSON (see scenarios/SCHEMA.md); angles are
 * degrees and clock offsets are meters in files, radians and seconds in
 * code. Metrics go out as long-format CSV, CSI tensors as little-endian
 * binary with a self-describing header (see docs/FORMATS.md). All writers
 * are deterministic: equal inputs produce byte-identical files.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "anchorsense/channel.hpp"
#include "anchorsense/scene.hpp"

namespace asense {

/// Everything a simulation run needs to know about the world: geometry,
/// numerology, clock model and receiver noise.
struct ScenarioConfig {
  std::string name = "unnamed";
  Scene scene;
  Waveform waveform;
  ClockSpec clock;
  double noise_sigma_sq = 0.0;  ///< receiver noise power per sample [W]
  /// Permit total delays beyond the unambiguous window during synthesis
  /// (they fold modulo 1/delta_f). Needed whenever the timing-offset range
  /// plus the longest bistatic delay exceeds the window.
  bool allow_delay_alias = false;
};

/// Parses a scenario from JSON text.
/// @throws ScenarioError on malformed structure, unknown keys or bad values
ScenarioConfig parse_scenario(const std::string& json_text);

/// Reads and parses a scenario file.
ScenarioConfig load_scenario(const std::string& path);

/// Serializes a scenario to canonical JSON (2-space indent). The round trip
/// through parse_scenario() reproduces every value exactly.
std::string scenario_to_json(const ScenarioConfig& config);

/// One long-format metrics row.
struct MetricRow {
  std::string metric;
  double grid_value = 0.0;
  double value = 0.0;
  int trials = 0;
  std::uint64_t seed = 0;
};

/// Writes "metric,grid_value,value,trials,seed" rows.
void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows);

/// Writes a two-column CSV with header "<x_name>,<y_name>".
void write_xy_csv(const std::string& path, const std::string& x_name,
                  const std::string& y_name, const std::vector<double>& x,
                  const std::vector<double>& y);

/// Writes text to a file, creating parent directories as needed.
void write_text_file(const std::string& path, const std::string& text);

/// Shortest decimal representation that parses back to exactly @p value.
std::string format_double(double value);

/// Dumps a CSI tensor as little-endian binary with a self-describing header
/// (magic, dtype, N, K, M, array split, delta_f, T0; byte layout in
/// docs/FORMATS.md).
void write_csi_dump(const std::string& path, const CsiTensor& csi,
                    bool single_precision = false);

/// Reads a CSI dump back; both precisions land in double.
/// @throws ScenarioError on bad magic, version, or truncated payload
CsiTensor read_csi_dump(const std::string& path);

/// Library version: project version plus git describe when built from a
/// checkout. Recorded in run manifests.
const char* library_version();

}  // namespace asense
