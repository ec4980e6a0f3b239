// SPDX-License-Identifier: MIT

/**
 * @file scene.cpp
 * @brief Geometry-to-path derivation and clock sequence sampling.
 */

#include "anchorsense/scene.hpp"

#include <cmath>
#include <string>

namespace asense {

double arrival_angle(const Position2D& bs, const Position2D& q) {
  return std::atan2(q.x - bs.x, q.y - bs.y);
}

double departure_angle(const Position2D& ue, double rho_rad, const Position2D& q) {
  // The UE array line is tilted by rho from the y-axis with its broadside
  // facing the scene (the half-plane that contains the BS), so the broadside
  // points at compass angle -(pi/2 + rho) and the frame-local angle of a
  // departing ray at compass angle psi is psi + pi/2 + rho. Under this
  // convention the localization identities
  //   p_x = cos(rho - phi) d_t + sin(theta) d_r
  //   p_y = sin(rho - phi) d_t + cos(theta) d_r
  // hold exactly.
  const double depart = std::atan2(q.x - ue.x, q.y - ue.y);
  return wrap_angle(depart + kPi / 2.0 + rho_rad);
}

namespace {

constexpr double kMinRange = 1e-9;  // [m] below this a reflector is "on" a terminal

/// Complex gain magnitude of a bistatic reflection.
double bistatic_amplitude(double tx_power, double wavelength, double sigma_x,
                          double d_t, double d_r) {
  const double four_pi = 4.0 * kPi;
  const double power = tx_power * wavelength * wavelength * sigma_x /
                       (four_pi * four_pi * four_pi * d_t * d_t * d_r * d_r);
  return std::sqrt(power);
}

PathParams make_path(const Scene& scene, const Position2D& q, double sigma_x,
                     double doppler_hz, PathKind kind, int index, Rng& rng) {
  const double d_t = distance(scene.ue_position, q);
  const double d_r = distance(scene.bs_position, q);
  if (d_t < kMinRange || d_r < kMinRange) {
    throw ScenarioError("reflector " + std::to_string(index) +
                        " coincides with a terminal (zero range)");
  }

  PathParams path;
  path.delay_s = (d_t + d_r) / kSpeedOfLight;
  path.doppler_hz = doppler_hz;
  path.aoa_rad = arrival_angle(scene.bs_position, q);
  path.aod_rad = departure_angle(scene.ue_position, scene.ue_rotation_rho, q);
  const double amp =
      bistatic_amplitude(scene.tx_power, scene.carrier_wavelength, sigma_x, d_t, d_r);
  const double phase = rng.uniform(-kPi, kPi);
  path.coeff = std::polar(amp, phase);
  path.kind = kind;
  path.source_index = index;
  return path;
}

}  // namespace

std::vector<PathParams> derive_paths(const Scene& scene, Rng& rng) {
  std::vector<PathParams> paths;
  paths.reserve(scene.anchors.size() + scene.static_objects.size() +
                scene.dynamic_targets.size() + (scene.include_los ? 1 : 0));

  int idx = 0;
  for (const auto& anchor : scene.anchors) {
    if (anchor.reflecting_factor <= 0.0) {
      throw ScenarioError("anchor " + std::to_string(idx) + " has non-positive reflecting factor");
    }
    paths.push_back(make_path(scene, anchor.position, anchor.reflecting_factor, 0.0,
                              PathKind::Anchor, idx, rng));
    ++idx;
  }

  idx = 0;
  for (const auto& obj : scene.static_objects) {
    if (obj.reflecting_factor <= 0.0) {
      throw ScenarioError("static object " + std::to_string(idx) +
                          " has non-positive reflecting factor");
    }
    paths.push_back(make_path(scene, obj.position, obj.reflecting_factor, 0.0,
                              PathKind::Static, idx, rng));
    ++idx;
  }

  idx = 0;
  for (const auto& target : scene.dynamic_targets) {
    if (target.reflecting_factor <= 0.0) {
      throw ScenarioError("dynamic target " + std::to_string(idx) +
                          " has non-positive reflecting factor");
    }
    double doppler = 0.0;
    if (target.doppler_hz) {
      doppler = *target.doppler_hz;
    } else if (target.velocity_mps) {
      doppler = bistatic_doppler(target.position, *target.velocity_mps, scene.ue_position,
                                 scene.bs_position, scene.carrier_wavelength);
    } else {
      throw ScenarioError("dynamic target " + std::to_string(idx) +
                          " needs either doppler_hz or velocity_mps");
    }
    paths.push_back(make_path(scene, target.position, target.reflecting_factor, doppler,
                              PathKind::Dynamic, idx, rng));
    ++idx;
  }

  if (scene.include_los) {
    paths = add_los_path(std::move(paths), scene);
  }
  return paths;
}

std::vector<PathParams> add_los_path(std::vector<PathParams> paths, const Scene& scene) {
  const double r = distance(scene.ue_position, scene.bs_position);
  if (r < kMinRange) {
    throw ScenarioError("UE coincides with BS; line-of-sight path is degenerate");
  }
  PathParams los;
  los.delay_s = r / kSpeedOfLight;
  los.doppler_hz = 0.0;
  los.aoa_rad = arrival_angle(scene.bs_position, scene.ue_position);
  // Departure direction is from the UE toward the BS, in the UE array frame.
  los.aod_rad =
      departure_angle(scene.ue_position, scene.ue_rotation_rho, scene.bs_position);
  const double amp_sq = scene.tx_power * std::pow(scene.carrier_wavelength / (4.0 * kPi * r), 2);
  los.coeff = std::polar(std::sqrt(amp_sq), 0.0);
  los.kind = PathKind::LineOfSight;
  los.source_index = 0;
  paths.push_back(los);
  return paths;
}

std::vector<double> ClockSequence::relative_tmo() const {
  std::vector<double> rel(tmo_s.size());
  for (std::size_t k = 0; k < tmo_s.size(); ++k) rel[k] = tmo_s[k] - tmo_s[0];
  return rel;
}

std::vector<double> ClockSequence::relative_cfo() const {
  std::vector<double> rel(cfo_phase_rad.size());
  for (std::size_t k = 0; k < cfo_phase_rad.size(); ++k) {
    rel[k] = (k == 0) ? 0.0 : wrap_angle(cfo_phase_rad[k] - cfo_phase_rad[0]);
  }
  return rel;
}

ClockSequence sample_clock(Rng& rng, int K, const ClockSpec& spec) {
  if (K < 2) throw ScenarioError("clock sequence needs at least 2 symbols");
  ClockSequence clock;
  clock.tmo_s.resize(K);
  clock.cfo_phase_rad.resize(K);
  for (int k = 0; k < K; ++k) {
    clock.tmo_s[k] = rng.uniform(spec.tmo_min_s, spec.tmo_max_s);
    clock.cfo_phase_rad[k] = rng.uniform(spec.cfo_min_rad, spec.cfo_max_rad);
  }
  // Pinning re-references the whole sequence so the relative offsets
  // (k >= 1 minus k = 0) are exactly the same for every pin choice under a
  // fixed seed; only the absolute reference moves. Pinned sequences may
  // therefore leave the sampling range.
  if (spec.pin_tmo0_s || spec.pin_cfo0_rad) {
    clock = with_reference(clock, spec.pin_tmo0_s.value_or(clock.tmo_s[0]),
                           spec.pin_cfo0_rad.value_or(clock.cfo_phase_rad[0]));
  }
  return clock;
}

ClockSequence zero_clock(int K) {
  ClockSequence clock;
  clock.tmo_s.assign(K, 0.0);
  clock.cfo_phase_rad.assign(K, 0.0);
  return clock;
}

ClockSequence with_reference(const ClockSequence& clock, double tmo0_s, double cfo0_rad) {
  ClockSequence out = clock;
  for (int k = 0; k < clock.symbols(); ++k) {
    out.tmo_s[k] = tmo0_s + (clock.tmo_s[k] - clock.tmo_s[0]);
    out.cfo_phase_rad[k] = cfo0_rad + (clock.cfo_phase_rad[k] - clock.cfo_phase_rad[0]);
  }
  return out;
}

double bistatic_doppler(const Position2D& target, const std::array<double, 2>& velocity,
                        const Position2D& ue, const Position2D& bs, double wavelength) {
  const double d_t = distance(target, ue);
  const double d_r = distance(target, bs);
  if (d_t < kMinRange || d_r < kMinRange) {
    throw ScenarioError("bistatic Doppler undefined for zero range");
  }
  const double ux = (ue.x - target.x) / d_t + (bs.x - target.x) / d_r;
  const double uy = (ue.y - target.y) / d_t + (bs.y - target.y) / d_r;
  return (velocity[0] * ux + velocity[1] * uy) / wavelength;
}

}  // namespace asense
