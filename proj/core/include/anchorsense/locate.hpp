// SPDX-License-Identifier: MIT
#pragma once

/**
 * @file locate.hpp
 * @brief Absolute localization from anchor-aided sensing measurements.
 *
 * The anchor measurements (bistatic ranges biased by the unknown reference
 * timing offset, plus departure angles) are tied to the exactly known anchor
 * geometry through a stack of constraint residuals in which the common range
 * bias cancels. A Gauss-Newton iteration solves the stack for the UE
 * position, array orientation and UE-to-anchor ranges; the reference timing
 * offset then follows by averaging over anchors, and each dynamic target is
 * placed on its bistatic ellipse in closed form. A first-order propagation
 * predicts the estimation covariance from per-measurement noise levels.
 *
 * All positions are expressed in the frame with the BS at the origin; the
 * helpers that accept a BS position translate into that frame.
 */

#include <vector>

#include <Eigen/Dense>

#include "anchorsense/common.hpp"
#include "anchorsense/estimate.hpp"
#include "anchorsense/scene.hpp"

namespace asense {

/// Receiver-side knowledge of one anchor point: its exact distance from the
/// BS and its arrival angle at the BS array.
struct KnownAnchor {
  double range_to_bs_m = 0.0;  ///< d^(r), BS-to-anchor range
  double aoa_rad = 0.0;        ///< theta, compass angle from +y toward +x
};

/// Builds the receiver-side anchor record from an anchor position.
KnownAnchor known_anchor(const Position2D& anchor, const Position2D& bs = {});

/// Constraint residual stack g and its Jacobian H = dg/d(unknowns) at one
/// candidate unknown vector.
struct ResidualSystem {
  Eigen::VectorXd g;  ///< length 3*La - 1
  Eigen::MatrixXd h;  ///< (3*La - 1) x (La + 3)
};

/**
 * @brief Evaluates the constraint residuals and their Jacobian.
 *
 * The unknown vector is laid out as [p_x, p_y, rho, d_0, ..., d_{La-1}]
 * (UE position, array orientation, UE-to-anchor ranges). Residual order:
 * first the La - 1 range differences relative to anchor 0 (in which the
 * common timing bias cancels), then per anchor the x and y position
 * constraints. With noise-free measurements the stack vanishes at the true
 * unknowns.
 *
 * @param unknowns      candidate [p_x, p_y, rho, d_0..d_{La-1}], length La+3
 * @param measurements  one AnchorMeasurement per anchor (any order;
 *                      anchor_index selects the matching KnownAnchor)
 * @param anchors       receiver-side anchor knowledge, La >= 2 entries
 * @throws EstimationError on size mismatch or missing/duplicate measurements
 */
ResidualSystem build_residuals(const Eigen::VectorXd& unknowns,
                               const std::vector<AnchorMeasurement>& measurements,
                               const std::vector<KnownAnchor>& anchors);

/// Gauss-Newton solver controls.
struct SolveParams {
  double tolerance = 1e-10;  ///< infinity-norm step tolerance (mixed units;
                             ///< variables are O(1)-O(100) so this is tight)
  int max_iterations = 100;
  /// cond(H^T H) beyond which the geometry is rejected as degenerate.
  double condition_limit = 1e12;
  /// Optional explicit start; empty picks [0, 0, 0, R~_0, ..., R~_{La-1}].
  Eigen::VectorXd initial;
};

/// Converged localization state.
struct LocalizationSolution {
  Position2D ue_position;              ///< p_hat, BS-origin frame
  double rho_rad = 0.0;                ///< array orientation, in (-pi, pi]
  double tau_o0_s = 0.0;               ///< reference timing offset
  std::vector<double> anchor_ranges_m; ///< d^(t) UE-to-anchor ranges
  int iterations = 0;
  bool converged = false;
  double condition_number = 0.0;       ///< cond(H^T H) at the solution
  /// First-order error covariance of [p_x, p_y, rho, d_0..]; empty until
  /// filled from predict_covariance().
  Eigen::MatrixXd covariance;
};

/**
 * @brief Solves the anchor-constraint system for the UE pose.
 *
 * Iterates unknowns -= pinv(H) g from the default start (zero pose, measured
 * ranges) until the step's infinity norm drops below the tolerance. The
 * reference timing offset is recovered afterwards by averaging the
 * measured-minus-geometric range excess over anchors. Non-convergence within
 * the iteration budget is reported through the converged flag, not thrown.
 *
 * @throws CollinearGeometry when cond(H^T H) exceeds the configured limit:
 *         the UE lies on the line through the anchor points (outside the
 *         segment between them) and the constraint stack loses rank.
 * @throws EstimationError on fewer than two anchors or malformed inputs
 */
LocalizationSolution locate_ue(const std::vector<AnchorMeasurement>& measurements,
                               const std::vector<KnownAnchor>& anchors,
                               const SolveParams& params = {});

/// Absolute position assigned to one dynamic-target measurement.
struct TargetPosition {
  int target_index = 0;        ///< copied from the measurement
  Position2D position;         ///< BS-origin frame; valid when locatable
  double range_to_bs_m = 0.0;  ///< d^(r,d) solved from the bistatic ellipse
  bool locatable = false;      ///< false when the ellipse solution is
                               ///< non-finite or non-positive
};

/**
 * @brief Places each dynamic target on its debiased bistatic ellipse.
 *
 * Per target the absolute bistatic range c*tau = R~ - c*tau_o0 and the
 * arrival angle theta define the intersection of an ellipse (foci BS and UE)
 * with the BS-side bearing ray; the BS-to-target range has the closed form
 *   d = ((c tau)^2 - |p|^2) / (2 (c tau - p_x sin(theta) - p_y cos(theta)))
 * and the position is d (sin(theta), cos(theta)). Inconsistent measurements
 * (non-finite or non-positive d, or d exceeding the absolute range) are
 * flagged unlocatable rather than thrown.
 *
 * @throws EstimationError when the solution has not converged
 */
std::vector<TargetPosition> locate_dynamic(
    const LocalizationSolution& solution,
    const std::vector<DynamicMeasurement>& targets);

/// Per-measurement noise levels for covariance prediction.
struct MeasurementNoise {
  double range_sigma_m = 0.0;   ///< std of each anchor relative range
  double aod_sigma_rad = 0.0;   ///< std of each anchor departure angle
};

/**
 * @brief First-order covariance of the unknowns [p_x, p_y, rho, d_0..].
 *
 * Propagates independent per-anchor range and departure-angle noise through
 * the linearized constraint stack at the solution:
 * cov = A diag(sigma^2) A^T with A = pinv(H) dg/de and the measurement
 * vector e = [R~_0..R~_{La-1}, phi_0..phi_{La-1}].
 */
Eigen::MatrixXd predict_covariance(const LocalizationSolution& solution,
                                   const std::vector<AnchorMeasurement>& measurements,
                                   const std::vector<KnownAnchor>& anchors,
                                   const MeasurementNoise& noise);

/**
 * @brief Conditioning diagnostic for a candidate geometry.
 *
 * Builds noise-free measurements from the geometry and returns cond(H^T H)
 * at the true unknowns. Values beyond ~1e10 indicate that localization is
 * unreliable (the UE approaches the line through the anchors).
 */
double geometry_condition(const Position2D& ue, double rho_rad,
                          const std::vector<Position2D>& anchor_positions,
                          const Position2D& bs = {});

/**
 * @brief Noise-free anchor measurements generated from geometry.
 *
 * Relative range = c*tau_o0 + d^(t) + d^(r); departure angle per the shared
 * UE array frame convention. Useful as the forward-model oracle for
 * exact-recovery tests and feasibility checks.
 */
std::vector<AnchorMeasurement> ideal_anchor_measurements(
    const Position2D& ue, double rho_rad, double tau_o0_s,
    const std::vector<Position2D>& anchor_positions, const Position2D& bs = {});

}  // namespace asense
