// SPDX-License-Identifier: MIT
#pragma once

/**
 * @file common.hpp
 * @brief Shared constants, aliases and error types for the anchorsense library.
 */

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace asense {

using cplx = std::complex<double>;

/// Speed of light in vacuum [m/s].
inline constexpr double kSpeedOfLight = 299792458.0;

/// Boltzmann constant [J/K].
inline constexpr double kBoltzmann = 1.380649e-23;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle to the interval (-pi, pi].
inline double wrap_angle(double rad) {
  double w = std::remainder(rad, kTwoPi);
  if (w <= -kPi) w += kTwoPi;
  return w;
}

/// Wraps a value to the interval (-period/2, period/2].
inline double wrap_to_half(double value, double period) {
  double w = std::remainder(value, period);
  if (w <= -0.5 * period) w += period;
  return w;
}

/// Invalid or degenerate scenario description (e.g. a reflector placed on a terminal).
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Propagation delay outside the unambiguous window; synthesis would silently fold it.
class AliasingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An estimator could not produce a usable result (degenerate input, empty spectrum, ...).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The anchor geometry is (near-)collinear with the terminal; the localization
/// system is singular and the position error is unbounded.
class CollinearGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace asense
