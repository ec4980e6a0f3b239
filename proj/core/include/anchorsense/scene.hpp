// SPDX-License-Identifier: MIT
#pragma once

/**
 * @file scene.hpp
 * @brief Physical scenario description and ground-truth path derivation.
 *
 * A Scene places a base station (BS, the sensing receiver), a user terminal
 * (UE, the transmitter), anchor points with exactly known positions, passive
 * static reflectors and moving targets on the 2-D plane. derive_paths() turns
 * the geometry into per-path propagation parameters (delay, Doppler, angles,
 * complex gain) consumed by the channel synthesizer and by test oracles.
 *
 * Angle conventions (shared by every module):
 *  - AOA theta is measured at the BS array from the +y axis, positive toward
 *    +x; a reflector at BS-range d lies at (d*sin(theta), d*cos(theta)).
 *  - AOD phi is measured in the UE array frame: the aperture line is tilted
 *    by rho from the +y axis, with broadside facing the scene at compass
 *    angle -(pi/2 + rho). A ray departing at compass angle psi therefore has
 *    frame angle phi = psi + pi/2 + rho. The conventions are tied together by
 *    the reconstruction identity
 *        p_ue = q_obj + d_t * (cos(rho - phi), sin(rho - phi)),
 *    i.e. the unit vector from a reflector toward the UE subtends the angle
 *    (rho - phi) from the +x axis. With exact measurements the localization
 *    residuals are identically zero under this convention.
 */

#include <optional>
#include <vector>

#include "anchorsense/common.hpp"
#include "anchorsense/rng.hpp"

namespace asense {

struct Position2D {
  double x = 0.0;  ///< [m]
  double y = 0.0;  ///< [m]
};

inline double distance(const Position2D& a, const Position2D& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Arrival angle of an object at @p q seen from the BS array at @p bs:
/// compass angle of the bs->q direction, from +y toward +x.
double arrival_angle(const Position2D& bs, const Position2D& q);

/// Departure angle of the ue->q direction in the UE array frame (aperture
/// line tilted @p rho_rad from +y, broadside toward compass -(pi/2 + rho)).
/// Wrapped to (-pi, pi].
double departure_angle(const Position2D& ue, double rho_rad, const Position2D& q);

/// Static reflector whose position is known exactly; used to resolve the
/// common range bias left by the unknown reference timing offset.
struct AnchorPoint {
  Position2D position;
  double reflecting_factor = 1.0;  ///< radar cross section sigma_x [m^2]
};

/// Passive reflector with zero Doppler and unknown position.
struct StaticObject {
  Position2D position;
  double reflecting_factor = 1.0;  ///< [m^2]
};

/// Moving reflector. Doppler is either given explicitly or derived from a
/// velocity vector via the bistatic geometry.
struct DynamicTarget {
  Position2D position;
  double reflecting_factor = 1.0;            ///< [m^2]
  std::optional<double> doppler_hz;          ///< explicit bistatic Doppler
  std::optional<std::array<double, 2>> velocity_mps;  ///< alternative: velocity
};

struct Scene {
  Position2D bs_position{0.0, 0.0};
  Position2D ue_position{};
  double ue_rotation_rho = 0.0;     ///< UE array rotation from +y axis [rad]
  std::vector<AnchorPoint> anchors;
  std::vector<StaticObject> static_objects;
  std::vector<DynamicTarget> dynamic_targets;
  double carrier_wavelength = 0.1;  ///< [m]
  double tx_power = 0.1;            ///< [W]
  bool include_los = false;         ///< add the direct UE->BS path
};

/// Provenance of a propagation path, for measurement/truth association.
enum class PathKind { Anchor, Static, Dynamic, LineOfSight };

/// Ground-truth parameters of one propagation path.
struct PathParams {
  double delay_s = 0.0;     ///< bistatic delay (d_t + d_r)/c [s]
  double doppler_hz = 0.0;  ///< bistatic Doppler [Hz]
  double aoa_rad = 0.0;     ///< arrival angle at the BS array
  double aod_rad = 0.0;     ///< departure angle in the UE array frame
  cplx coeff{0.0, 0.0};     ///< complex gain xi (amplitude from link budget)
  PathKind kind = PathKind::Static;
  int source_index = 0;     ///< index within the source list of this kind
};

/// Per-symbol clock state of the unsynchronized link: timing offset tau_o[k]
/// and the combined random-phase/residual-carrier term phase[k].
struct ClockSequence {
  std::vector<double> tmo_s;          ///< tau_o[k], [s]
  std::vector<double> cfo_phase_rad;  ///< f~_o[k], [rad]

  int symbols() const { return static_cast<int>(tmo_s.size()); }

  /// Relative timing offsets tau_o[k] - tau_o[0]; element 0 is exactly 0.
  std::vector<double> relative_tmo() const;
  /// Relative phase offsets wrapped to (-pi, pi]; element 0 is exactly 0.
  std::vector<double> relative_cfo() const;
};

/// Ranges for drawing per-symbol clock offsets, with optional pinning of the
/// reference (k = 0) values e.g. to study invariance to the absolute offset.
struct ClockSpec {
  double tmo_min_s = 0.0;
  double tmo_max_s = 0.0;
  double cfo_min_rad = -kPi;
  double cfo_max_rad = kPi;
  std::optional<double> pin_tmo0_s;
  std::optional<double> pin_cfo0_rad;
};

/**
 * @brief Derives one PathParams per anchor, static object and dynamic target
 *        (plus the optional line-of-sight path, appended last).
 *
 * The gain magnitude follows the bistatic link budget
 *   |xi|^2 = P_t * lambda^2 * sigma_x / ((4*pi)^3 * d_t^2 * d_r^2)
 * and the phase is drawn uniformly from [-pi, pi) using @p rng.
 *
 * @throws ScenarioError if a reflector coincides with the BS or the UE.
 */
std::vector<PathParams> derive_paths(const Scene& scene, Rng& rng);

/// Appends the direct UE->BS path (free-space attenuation (lambda/(4*pi*R))^2,
/// zero Doppler, AOA/AOD of the direct line). Returns the augmented list.
std::vector<PathParams> add_los_path(std::vector<PathParams> paths, const Scene& scene);

/**
 * @brief Draws an independent uniform clock state for each of @p K symbols.
 *
 * Pinned reference values (spec.pin_*) replace the k = 0 draw after sampling,
 * so the relative offsets of k >= 1 are unaffected by the pin.
 */
ClockSequence sample_clock(Rng& rng, int K, const ClockSpec& spec);

/// Clock sequence with all offsets zero (synchronized reference runs).
ClockSequence zero_clock(int K);

/// Returns a copy of @p clock with the reference values changed to
/// (tmo0_s, cfo0_rad) while preserving all relative offsets exactly.
ClockSequence with_reference(const ClockSequence& clock, double tmo0_s, double cfo0_rad);

/// Bistatic Doppler of a target moving with velocity v: projection of v onto
/// the sum of the unit vectors toward the transmitter and the receiver,
/// divided by the wavelength. Receding targets have negative Doppler.
double bistatic_doppler(const Position2D& target, const std::array<double, 2>& velocity,
                        const Position2D& ue, const Position2D& bs, double wavelength);

}  // namespace asense
