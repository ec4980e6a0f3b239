// SPDX-License-Identifier: MIT

/**
 * @file locate.cpp
 * @brief Gauss-Newton localization, dynamic-target placement, covariance.
 */

#include "anchorsense/locate.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace asense {

namespace {

/// Orders the measurements by anchor index; every anchor must be measured
/// exactly once.
std::vector<const AnchorMeasurement*> by_anchor(
    const std::vector<AnchorMeasurement>& measurements, int la) {
  std::vector<const AnchorMeasurement*> out(la, nullptr);
  for (const AnchorMeasurement& m : measurements) {
    if (m.anchor_index < 0 || m.anchor_index >= la)
      throw EstimationError("anchor measurement index " +
                            std::to_string(m.anchor_index) +
                            " outside the known-anchor list");
    if (out[m.anchor_index] != nullptr)
      throw EstimationError("duplicate measurement for anchor " +
                            std::to_string(m.anchor_index));
    out[m.anchor_index] = &m;
  }
  for (int l = 0; l < la; ++l)
    if (out[l] == nullptr)
      throw EstimationError("anchor " + std::to_string(l) +
                            " has no measurement");
  return out;
}

void require_two_anchors(std::size_t la) {
  if (la < 2)
    throw EstimationError(
        "localization needs at least two anchor points to cancel the common "
        "range bias");
}

/// cond(H^T H) = (s_max / s_min)^2 of H.
double condition_of(const Eigen::MatrixXd& h) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(h);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  const double ratio = sv(0) / smin;
  return ratio * ratio;
}

Position2D anchor_position(const KnownAnchor& a) {
  return {a.range_to_bs_m * std::sin(a.aoa_rad),
          a.range_to_bs_m * std::cos(a.aoa_rad)};
}

}  // namespace

KnownAnchor known_anchor(const Position2D& anchor, const Position2D& bs) {
  KnownAnchor out;
  out.range_to_bs_m = distance(bs, anchor);
  out.aoa_rad = arrival_angle(bs, anchor);
  return out;
}

ResidualSystem build_residuals(const Eigen::VectorXd& unknowns,
                               const std::vector<AnchorMeasurement>& measurements,
                               const std::vector<KnownAnchor>& anchors) {
  const int la = static_cast<int>(anchors.size());
  require_two_anchors(anchors.size());
  if (unknowns.size() != la + 3)
    throw EstimationError("unknown vector must have length La + 3");
  const auto ms = by_anchor(measurements, la);

  const double px = unknowns[0];
  const double py = unknowns[1];
  const double rho = unknowns[2];

  ResidualSystem rs;
  rs.g.setZero(3 * la - 1);
  rs.h.setZero(3 * la - 1, la + 3);

  // Range differences relative to anchor 0: the shared timing bias cancels.
  for (int l = 1; l < la; ++l) {
    rs.g[l - 1] = (ms[l]->relative_range_m - ms[0]->relative_range_m) -
                  ((unknowns[3 + l] + anchors[l].range_to_bs_m) -
                   (unknowns[3] + anchors[0].range_to_bs_m));
    rs.h(l - 1, 3) = 1.0;
    rs.h(l - 1, 3 + l) = -1.0;
  }

  // Per-anchor position constraints: the UE is reached from the anchor by
  // walking d along (cos(rho - phi), sin(rho - phi)).
  for (int l = 0; l < la; ++l) {
    const double d = unknowns[3 + l];
    const double c = std::cos(rho - ms[l]->aod_rad);
    const double s = std::sin(rho - ms[l]->aod_rad);
    const double st = std::sin(anchors[l].aoa_rad);
    const double ct = std::cos(anchors[l].aoa_rad);
    const int rx = la - 1 + 2 * l;
    const int ry = rx + 1;
    rs.g[rx] = px - c * d - st * anchors[l].range_to_bs_m;
    rs.g[ry] = py - s * d - ct * anchors[l].range_to_bs_m;
    rs.h(rx, 0) = 1.0;
    rs.h(rx, 2) = d * s;
    rs.h(rx, 3 + l) = -c;
    rs.h(ry, 1) = 1.0;
    rs.h(ry, 2) = -d * c;
    rs.h(ry, 3 + l) = -s;
  }
  return rs;
}

LocalizationSolution locate_ue(const std::vector<AnchorMeasurement>& measurements,
                               const std::vector<KnownAnchor>& anchors,
                               const SolveParams& params) {
  const int la = static_cast<int>(anchors.size());
  require_two_anchors(anchors.size());
  const auto ms = by_anchor(measurements, la);

  Eigen::VectorXd unknowns;
  if (params.initial.size() > 0) {
    if (params.initial.size() != la + 3)
      throw EstimationError("initial unknown vector must have length La + 3");
    unknowns = params.initial;
  } else {
    unknowns.setZero(la + 3);
    for (int l = 0; l < la; ++l) unknowns[3 + l] = ms[l]->relative_range_m;
  }

  const auto reject_if_degenerate = [&](double cond) {
    if (!(cond < params.condition_limit))
      throw CollinearGeometry(
          "anchor geometry is degenerate: the UE lies on the line through "
          "the anchor points and the constraint system loses rank "
          "(cond(H^T H) = " +
          std::to_string(cond) + ")");
  };

  LocalizationSolution sol;
  for (int it = 0; it < params.max_iterations && !sol.converged; ++it) {
    const ResidualSystem rs = build_residuals(unknowns, measurements, anchors);
    reject_if_degenerate(condition_of(rs.h));
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(rs.h);
    const Eigen::VectorXd step = cod.solve(rs.g);
    unknowns -= step;
    sol.iterations = it + 1;
    sol.converged = step.lpNorm<Eigen::Infinity>() < params.tolerance;
  }

  // Report (and police) the conditioning where it matters: at the solution.
  sol.condition_number =
      condition_of(build_residuals(unknowns, measurements, anchors).h);
  reject_if_degenerate(sol.condition_number);

  sol.ue_position = {unknowns[0], unknowns[1]};
  sol.rho_rad = wrap_angle(unknowns[2]);
  sol.anchor_ranges_m.assign(unknowns.data() + 3, unknowns.data() + 3 + la);

  // Reference timing offset: average measured-minus-geometric range excess.
  double excess = 0.0;
  for (int l = 0; l < la; ++l) {
    const Position2D q = anchor_position(anchors[l]);
    excess += ms[l]->relative_range_m -
              (distance(sol.ue_position, q) + anchors[l].range_to_bs_m);
  }
  sol.tau_o0_s = excess / (kSpeedOfLight * la);
  return sol;
}

std::vector<TargetPosition> locate_dynamic(
    const LocalizationSolution& solution,
    const std::vector<DynamicMeasurement>& targets) {
  if (!solution.converged)
    throw EstimationError(
        "localization did not converge; dynamic targets cannot be placed");
  const double px = solution.ue_position.x;
  const double py = solution.ue_position.y;
  std::vector<TargetPosition> out;
  out.reserve(targets.size());
  for (const DynamicMeasurement& t : targets) {
    TargetPosition tp;
    tp.target_index = t.target_index;
    const double ctau =
        t.relative_range_m - kSpeedOfLight * solution.tau_o0_s;
    const double st = std::sin(t.aoa_rad);
    const double ct = std::cos(t.aoa_rad);
    const double d = (ctau * ctau - (px * px + py * py)) /
                     (2.0 * (ctau - px * st - py * ct));
    tp.range_to_bs_m = d;
    // The ellipse constraint also demands a non-negative target-to-UE leg.
    tp.locatable = std::isfinite(d) && d > 0.0 && ctau - d >= 0.0;
    if (tp.locatable) tp.position = {d * st, d * ct};
    out.push_back(tp);
  }
  return out;
}

Eigen::MatrixXd predict_covariance(const LocalizationSolution& solution,
                                   const std::vector<AnchorMeasurement>& measurements,
                                   const std::vector<KnownAnchor>& anchors,
                                   const MeasurementNoise& noise) {
  const int la = static_cast<int>(anchors.size());
  require_two_anchors(anchors.size());
  const auto ms = by_anchor(measurements, la);
  if (static_cast<int>(solution.anchor_ranges_m.size()) != la)
    throw EstimationError("solution anchor-range count does not match anchors");

  Eigen::VectorXd unknowns(la + 3);
  unknowns[0] = solution.ue_position.x;
  unknowns[1] = solution.ue_position.y;
  unknowns[2] = solution.rho_rad;
  for (int l = 0; l < la; ++l) unknowns[3 + l] = solution.anchor_ranges_m[l];

  const ResidualSystem rs = build_residuals(unknowns, measurements, anchors);

  // dg/de for the stacked measurement vector e = [ranges; departure angles].
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(3 * la - 1, 2 * la);
  for (int l = 1; l < la; ++l) {
    j(l - 1, 0) = -1.0;
    j(l - 1, l) = 1.0;
  }
  for (int l = 0; l < la; ++l) {
    const double d = unknowns[3 + l];
    const double s = std::sin(unknowns[2] - ms[l]->aod_rad);
    const double c = std::cos(unknowns[2] - ms[l]->aod_rad);
    j(la - 1 + 2 * l, la + l) = -d * s;
    j(la - 1 + 2 * l + 1, la + l) = d * c;
  }

  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(rs.h);
  const Eigen::MatrixXd a = cod.solve(j);  // sign of the map drops out
  Eigen::VectorXd var(2 * la);
  var.head(la).setConstant(noise.range_sigma_m * noise.range_sigma_m);
  var.tail(la).setConstant(noise.aod_sigma_rad * noise.aod_sigma_rad);
  return a * var.asDiagonal() * a.transpose();
}

double geometry_condition(const Position2D& ue, double rho_rad,
                          const std::vector<Position2D>& anchor_positions,
                          const Position2D& bs) {
  require_two_anchors(anchor_positions.size());
  const int la = static_cast<int>(anchor_positions.size());
  std::vector<KnownAnchor> anchors;
  anchors.reserve(anchor_positions.size());
  for (const Position2D& q : anchor_positions)
    anchors.push_back(known_anchor(q, bs));
  const std::vector<AnchorMeasurement> meas =
      ideal_anchor_measurements(ue, rho_rad, 0.0, anchor_positions, bs);

  Eigen::VectorXd unknowns(la + 3);
  unknowns[0] = ue.x - bs.x;
  unknowns[1] = ue.y - bs.y;
  unknowns[2] = rho_rad;
  for (int l = 0; l < la; ++l)
    unknowns[3 + l] = distance(ue, anchor_positions[l]);
  return condition_of(build_residuals(unknowns, meas, anchors).h);
}

std::vector<AnchorMeasurement> ideal_anchor_measurements(
    const Position2D& ue, double rho_rad, double tau_o0_s,
    const std::vector<Position2D>& anchor_positions, const Position2D& bs) {
  std::vector<AnchorMeasurement> out;
  out.reserve(anchor_positions.size());
  for (std::size_t i = 0; i < anchor_positions.size(); ++i) {
    const Position2D& q = anchor_positions[i];
    AnchorMeasurement m;
    m.anchor_index = static_cast<int>(i);
    m.relative_range_m =
        kSpeedOfLight * tau_o0_s + distance(ue, q) + distance(bs, q);
    m.aod_rad = departure_angle(ue, rho_rad, q);
    m.peak_power = 1.0;
    out.push_back(m);
  }
  return out;
}

}  // namespace asense
