// SPDX-License-Identifier: MIT
#include <cmath>
#include <vector>

#include <doctest.h>

#include <Eigen/Dense>

#include "anchorsense/locate.hpp"
#include "anchorsense/rng.hpp"

using namespace asense;

namespace {

/// Measurements with arbitrary (not geometry-consistent) content; the
/// Jacobian is a function of the evaluation point and measurement angles
/// only, so random inputs exercise it fully.
struct RandomSystem {
  Eigen::VectorXd unknowns;
  std::vector<AnchorMeasurement> measurements;
  std::vector<KnownAnchor> anchors;
};

RandomSystem random_system(Rng& rng, int la) {
  RandomSystem sys;
  sys.unknowns.resize(la + 3);
  sys.unknowns[0] = rng.uniform(-100.0, 100.0);
  sys.unknowns[1] = rng.uniform(-100.0, 100.0);
  sys.unknowns[2] = rng.uniform(-kPi, kPi);
  for (int l = 0; l < la; ++l) {
    sys.unknowns[3 + l] = rng.uniform(5.0, 300.0);
    AnchorMeasurement m;
    m.anchor_index = l;
    m.relative_range_m = rng.uniform(50.0, 500.0);
    m.aod_rad = rng.uniform(-1.2, 1.2);
    sys.measurements.push_back(m);
    KnownAnchor a;
    a.range_to_bs_m = rng.uniform(2.0, 50.0);
    a.aoa_rad = rng.uniform(-kPi, kPi);
    sys.anchors.push_back(a);
  }
  return sys;
}

double rotate_x(const Position2D& p, double alpha) {
  return p.x * std::cos(alpha) + p.y * std::sin(alpha);
}
double rotate_y(const Position2D& p, double alpha) {
  return -p.x * std::sin(alpha) + p.y * std::cos(alpha);
}
/// Rotates a point about the origin in the compass sense (a point at compass
/// angle beta moves to beta + alpha).
Position2D rotate_compass(const Position2D& p, double alpha) {
  return {rotate_x(p, alpha), rotate_y(p, alpha)};
}

}  // namespace

TEST_CASE("residual jacobian matches central finite differences") {
  Rng rng(derive_seed(70, 1));
  for (int trial = 0; trial < 25; ++trial) {
    const int la = 2 + trial % 3;
    const RandomSystem sys = random_system(rng, la);
    const ResidualSystem rs =
        build_residuals(sys.unknowns, sys.measurements, sys.anchors);
    REQUIRE(rs.g.size() == 3 * la - 1);
    REQUIRE(rs.h.rows() == 3 * la - 1);
    REQUIRE(rs.h.cols() == la + 3);

    const double scale = rs.h.cwiseAbs().maxCoeff();
    for (int i = 0; i < sys.unknowns.size(); ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(sys.unknowns[i]));
      Eigen::VectorXd up = sys.unknowns, dn = sys.unknowns;
      up[i] += h;
      dn[i] -= h;
      const Eigen::VectorXd fd =
          (build_residuals(up, sys.measurements, sys.anchors).g -
           build_residuals(dn, sys.measurements, sys.anchors).g) /
          (2.0 * h);
      CHECK((fd - rs.h.col(i)).cwiseAbs().maxCoeff() < 1e-7 * scale);
    }
  }
}

TEST_CASE("two anchors give a square five-by-five system") {
  Rng rng(derive_seed(70, 2));
  const RandomSystem sys = random_system(rng, 2);
  const ResidualSystem rs =
      build_residuals(sys.unknowns, sys.measurements, sys.anchors);
  CHECK(rs.g.size() == 5);
  CHECK(rs.h.rows() == 5);
  CHECK(rs.h.cols() == 5);
}

TEST_CASE("residuals vanish at the generating geometry") {
  Rng rng(derive_seed(70, 3));
  for (int trial = 0; trial < 20; ++trial) {
    const int la = 2 + trial % 3;
    const Position2D ue{rng.uniform(20.0, 80.0), rng.uniform(20.0, 80.0)};
    const double rho = rng.uniform(-0.6, 0.6);
    const double tau = rng.uniform(0.0, 2e-6);
    std::vector<Position2D> anchor_pos;
    std::vector<KnownAnchor> anchors;
    for (int l = 0; l < la; ++l) {
      const Position2D q{rng.uniform(-30.0, 30.0), rng.uniform(2.0, 18.0)};
      anchor_pos.push_back(q);
      anchors.push_back(known_anchor(q));
    }
    const auto meas = ideal_anchor_measurements(ue, rho, tau, anchor_pos);

    Eigen::VectorXd truth(la + 3);
    truth << ue.x, ue.y, rho,
        Eigen::VectorXd::NullaryExpr(la, [&](Eigen::Index l) {
          return distance(ue, anchor_pos[static_cast<std::size_t>(l)]);
        });
    const ResidualSystem rs = build_residuals(truth, meas, anchors);
    CHECK(rs.g.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("solver recovers the generating geometry exactly") {
  Rng rng(derive_seed(70, 4));
  for (int trial = 0; trial < 15; ++trial) {
    const int la = 2 + trial % 3;
    const Position2D ue{rng.uniform(30.0, 90.0), rng.uniform(30.0, 90.0)};
    const double rho = rng.uniform(-0.6, 0.6);
    const double tau = rng.uniform(0.0, 2e-6);
    std::vector<Position2D> anchor_pos;
    std::vector<KnownAnchor> anchors;
    for (int l = 0; l < la; ++l) {
      const Position2D q{rng.uniform(-25.0, 25.0), rng.uniform(3.0, 15.0)};
      anchor_pos.push_back(q);
      anchors.push_back(known_anchor(q));
    }
    const auto meas = ideal_anchor_measurements(ue, rho, tau, anchor_pos);

    const LocalizationSolution sol = locate_ue(meas, anchors);
    REQUIRE(sol.converged);
    CHECK(std::abs(sol.ue_position.x - ue.x) < 1e-9);
    CHECK(std::abs(sol.ue_position.y - ue.y) < 1e-9);
    CHECK(std::abs(sol.rho_rad - rho) < 1e-9);
    CHECK(std::abs(sol.tau_o0_s - tau) * kSpeedOfLight < 1e-9);
    for (int l = 0; l < la; ++l)
      CHECK(std::abs(sol.anchor_ranges_m[l] - distance(ue, anchor_pos[l])) <
            1e-9);
    CHECK(sol.condition_number < 1e9);
  }
}

TEST_CASE("measurement order does not matter and malformed input throws") {
  const Position2D ue{60.0, 40.0};
  const std::vector<Position2D> anchor_pos{{0.0, 11.1}, {12.3, 3.8}};
  std::vector<KnownAnchor> anchors;
  for (const auto& q : anchor_pos) anchors.push_back(known_anchor(q));
  auto meas = ideal_anchor_measurements(ue, 0.35, 1e-6, anchor_pos);

  const LocalizationSolution a = locate_ue(meas, anchors);
  std::swap(meas[0], meas[1]);
  const LocalizationSolution b = locate_ue(meas, anchors);
  CHECK(a.ue_position.x == doctest::Approx(b.ue_position.x).epsilon(1e-12));
  CHECK(a.ue_position.y == doctest::Approx(b.ue_position.y).epsilon(1e-12));

  auto dup = meas;
  dup[0].anchor_index = dup[1].anchor_index;
  CHECK_THROWS_AS(locate_ue(dup, anchors), EstimationError);
  CHECK_THROWS_AS(locate_ue({meas[0]}, anchors), EstimationError);
  CHECK_THROWS_AS(locate_ue(meas, {anchors[0]}), EstimationError);
}

TEST_CASE("a common range offset moves only the timing estimate") {
  const Position2D ue{60.0, 40.0};
  const double rho = 0.349;
  const std::vector<Position2D> anchor_pos{{0.0, 11.1}, {12.3, 3.8}};
  std::vector<KnownAnchor> anchors;
  for (const auto& q : anchor_pos) anchors.push_back(known_anchor(q));

  const Position2D target{45.1, 9.2};
  const double base_bias_m = 205.6;
  auto run = [&](double extra_m) {
    auto meas = ideal_anchor_measurements(
        ue, rho, (base_bias_m + extra_m) / kSpeedOfLight, anchor_pos);
    const LocalizationSolution sol = locate_ue(meas, anchors);
    DynamicMeasurement dm;
    dm.relative_range_m = base_bias_m + extra_m + distance(ue, target) +
                          distance(Position2D{}, target);
    dm.aoa_rad = arrival_angle({}, target);
    const auto placed = locate_dynamic(sol, {dm});
    REQUIRE(placed.size() == 1);
    REQUIRE(placed[0].locatable);
    return std::tuple{sol, placed[0]};
  };

  const auto [sol0, tgt0] = run(0.0);
  const auto [sol1, tgt1] = run(37.5);
  CHECK(std::abs(kSpeedOfLight * (sol1.tau_o0_s - sol0.tau_o0_s) - 37.5) <
        1e-9);
  CHECK(std::abs(sol1.ue_position.x - sol0.ue_position.x) < 1e-9);
  CHECK(std::abs(sol1.ue_position.y - sol0.ue_position.y) < 1e-9);
  CHECK(std::abs(sol1.rho_rad - sol0.rho_rad) < 1e-12);
  CHECK(std::abs(tgt1.position.x - tgt0.position.x) < 1e-9);
  CHECK(std::abs(tgt1.position.y - tgt0.position.y) < 1e-9);
}

TEST_CASE("rotating the scene about the receiver rotates the outputs") {
  const Position2D ue{60.0, 40.0};
  const double rho = 0.349;
  const double tau = 205.6 / kSpeedOfLight;
  const std::vector<Position2D> anchor_pos{{0.0, 11.1}, {12.3, 3.8}};
  const double alpha = 0.8;

  std::vector<KnownAnchor> anchors, anchors_rot;
  std::vector<Position2D> pos_rot;
  for (const auto& q : anchor_pos) {
    anchors.push_back(known_anchor(q));
    pos_rot.push_back(rotate_compass(q, alpha));
    anchors_rot.push_back(known_anchor(pos_rot.back()));
  }
  // Rotating a rigid body by +alpha in the compass sense tilts the array
  // line by -alpha relative to the +y axis.
  const Position2D ue_rot = rotate_compass(ue, alpha);
  const double rho_rot = rho - alpha;

  const auto meas = ideal_anchor_measurements(ue, rho, tau, anchor_pos);
  const auto meas_rot =
      ideal_anchor_measurements(ue_rot, rho_rot, tau, pos_rot);
  // Ranges and departure angles are rotation invariants; arrival angles
  // shift by alpha.
  for (std::size_t l = 0; l < anchors.size(); ++l) {
    CHECK(meas_rot[l].relative_range_m ==
          doctest::Approx(meas[l].relative_range_m).epsilon(1e-12));
    CHECK(meas_rot[l].aod_rad == doctest::Approx(meas[l].aod_rad).epsilon(1e-12));
    CHECK(wrap_angle(anchors_rot[l].aoa_rad - anchors[l].aoa_rad) ==
          doctest::Approx(alpha).epsilon(1e-12));
  }

  const LocalizationSolution sol = locate_ue(meas, anchors);
  const LocalizationSolution sol_rot = locate_ue(meas_rot, anchors_rot);
  REQUIRE(sol.converged);
  REQUIRE(sol_rot.converged);
  const Position2D expect = rotate_compass(sol.ue_position, alpha);
  CHECK(std::abs(sol_rot.ue_position.x - expect.x) < 1e-9);
  CHECK(std::abs(sol_rot.ue_position.y - expect.y) < 1e-9);
  CHECK(std::abs(wrap_angle(sol_rot.rho_rad - (sol.rho_rad - alpha))) < 1e-9);
  CHECK(std::abs(sol_rot.tau_o0_s - sol.tau_o0_s) * kSpeedOfLight < 1e-9);
}

TEST_CASE("collinear placement beyond the anchors is rejected") {
  // Anchors on the horizontal line y = 10; the UE sits on the same line
  // beyond both anchors, where the constraint stack loses rank.
  const std::vector<Position2D> anchor_pos{{0.0, 10.0}, {10.0, 10.0}};
  std::vector<KnownAnchor> anchors;
  for (const auto& q : anchor_pos) anchors.push_back(known_anchor(q));

  const Position2D on_line{25.0, 10.0};
  CHECK(geometry_condition(on_line, 0.2, anchor_pos) > 1e10);
  const auto meas =
      ideal_anchor_measurements(on_line, 0.2, 1e-6, anchor_pos);
  CHECK_THROWS_AS(locate_ue(meas, anchors), CollinearGeometry);

  // 0.1 m off the line: still effectively degenerate.
  CHECK(geometry_condition({25.0, 10.1}, 0.2, anchor_pos) > 1e10);

  // 5 m off the line: well conditioned and solvable again.
  const Position2D off_line{25.0, 15.0};
  CHECK(geometry_condition(off_line, 0.2, anchor_pos) < 1e9);
  const auto meas_off =
      ideal_anchor_measurements(off_line, 0.2, 1e-6, anchor_pos);
  const LocalizationSolution sol = locate_ue(meas_off, anchors);
  REQUIRE(sol.converged);
  CHECK(std::abs(sol.ue_position.x - off_line.x) < 1e-9);
  CHECK(std::abs(sol.ue_position.y - off_line.y) < 1e-9);

  // Between the anchors the directions to the two anchors are opposite and
  // the system keeps full rank even exactly on the line.
  CHECK(geometry_condition({5.0, 10.0}, 0.2, anchor_pos) < 1e9);
}

TEST_CASE("ellipse closed form agrees with bisection") {
  Rng rng(derive_seed(70, 5));
  double max_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Position2D p{rng.uniform(-80.0, 80.0), rng.uniform(10.0, 90.0)};
    const Position2D q{rng.uniform(-80.0, 80.0), rng.uniform(5.0, 90.0)};
    const double ctau = distance(p, q) + distance({}, q);  // absolute range
    const double theta = arrival_angle({}, q);

    LocalizationSolution sol;
    sol.converged = true;
    sol.ue_position = p;
    sol.tau_o0_s = 0.0;
    DynamicMeasurement dm;
    dm.relative_range_m = ctau;
    dm.aoa_rad = theta;
    const auto placed = locate_dynamic(sol, {dm});
    REQUIRE(placed.size() == 1);
    REQUIRE(placed[0].locatable);

    // Bisection on f(d) = |d u - p| - (ctau - d), monotone increasing in d.
    const double ux = std::sin(theta), uy = std::cos(theta);
    auto f = [&](double d) {
      return std::hypot(d * ux - p.x, d * uy - p.y) - (ctau - d);
    };
    double lo = 0.0, hi = ctau;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (f(mid) < 0.0 ? lo : hi) = mid;
    }
    max_err = std::max(max_err,
                       std::abs(placed[0].range_to_bs_m - 0.5 * (lo + hi)));
    CHECK(std::abs(placed[0].range_to_bs_m - distance({}, q)) < 1e-9);
  }
  CHECK(max_err < 1e-9);
}

TEST_CASE("inconsistent dynamic measurements are flagged unlocatable") {
  LocalizationSolution sol;
  sol.converged = true;
  sol.ue_position = {10.0, 0.0};
  sol.tau_o0_s = 0.0;

  auto place = [&](double range, double aoa) {
    DynamicMeasurement dm;
    dm.relative_range_m = range;
    dm.aoa_rad = aoa;
    return locate_dynamic(sol, {dm})[0];
  };

  // Denominator zero: absolute range equals the projection of the UE onto
  // the bearing ray.
  CHECK_FALSE(place(10.0, kPi / 2.0).locatable);
  // Positive root but negative target-to-UE leg (ghost branch).
  CHECK_FALSE(place(5.0, kPi / 2.0).locatable);
  // Consistent measurement: target at (20, 0).
  const TargetPosition ok = place(30.0, kPi / 2.0);
  REQUIRE(ok.locatable);
  CHECK(std::abs(ok.position.x - 20.0) < 1e-12);
  CHECK(std::abs(ok.position.y - 0.0) < 1e-12);

  sol.converged = false;
  CHECK_THROWS_AS(locate_dynamic(sol, {}), EstimationError);
}

TEST_CASE("representative layout is recovered through both stages") {
  const Position2D ue{60.0, 40.0};
  const double rho = 20.0 * kPi / 180.0;
  const double bias_m = 205.6;
  const std::vector<Position2D> anchor_pos{{0.0, 11.1}, {12.3, 3.8}};
  const std::vector<Position2D> targets{
      {-24.4, 46.0}, {45.1, 9.2}, {30.2, 51.9}};

  std::vector<KnownAnchor> anchors;
  for (const auto& q : anchor_pos) anchors.push_back(known_anchor(q));
  const auto meas =
      ideal_anchor_measurements(ue, rho, bias_m / kSpeedOfLight, anchor_pos);
  const LocalizationSolution sol = locate_ue(meas, anchors);
  REQUIRE(sol.converged);
  CHECK(std::abs(sol.ue_position.x - ue.x) < 1e-9);
  CHECK(std::abs(sol.ue_position.y - ue.y) < 1e-9);
  CHECK(std::abs(sol.rho_rad - rho) < 1e-11);
  CHECK(std::abs(sol.tau_o0_s * kSpeedOfLight - bias_m) < 1e-9);

  std::vector<DynamicMeasurement> dyn;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    DynamicMeasurement dm;
    dm.target_index = static_cast<int>(i);
    dm.relative_range_m = bias_m + distance(ue, targets[i]) +
                          distance(Position2D{}, targets[i]);
    dm.aoa_rad = arrival_angle({}, targets[i]);
    dyn.push_back(dm);
  }
  const auto placed = locate_dynamic(sol, dyn);
  REQUIRE(placed.size() == targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    REQUIRE(placed[i].locatable);
    CHECK(placed[i].target_index == static_cast<int>(i));
    CHECK(std::abs(placed[i].position.x - targets[i].x) < 1e-9);
    CHECK(std::abs(placed[i].position.y - targets[i].y) < 1e-9);
  }
}

TEST_CASE("zero measurement noise predicts zero covariance") {
  const Position2D ue{60.0, 40.0};
  const std::vector<Position2D> anchor_pos{{0.0, 11.1}, {12.3, 3.8}};
  std::vector<KnownAnchor> anchors;
  for (const auto& q : anchor_pos) anchors.push_back(known_anchor(q));
  const auto meas = ideal_anchor_measurements(ue, 0.35, 0.0, anchor_pos);
  const LocalizationSolution sol = locate_ue(meas, anchors);

  const Eigen::MatrixXd cov =
      predict_covariance(sol, meas, anchors, MeasurementNoise{0.0, 0.0});
  CHECK(cov.rows() == 5);
  CHECK(cov.cols() == 5);
  CHECK(cov.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("predicted covariance matches monte-carlo spread") {
  const Position2D ue{60.0, 40.0};
  const double rho = 0.349;
  const std::vector<Position2D> anchor_pos{{0.0, 11.1}, {12.3, 3.8}};
  std::vector<KnownAnchor> anchors;
  for (const auto& q : anchor_pos) anchors.push_back(known_anchor(q));
  const auto clean = ideal_anchor_measurements(ue, rho, 0.0, anchor_pos);
  const LocalizationSolution sol = locate_ue(clean, anchors);

  const MeasurementNoise noise{0.01, 5e-4};
  const Eigen::MatrixXd cov = predict_covariance(sol, clean, anchors, noise);
  const double predicted = std::sqrt(cov(0, 0) + cov(1, 1));

  Rng rng(derive_seed(70, 6));
  double sq = 0.0;
  const int trials = 400;
  for (int t = 0; t < trials; ++t) {
    auto noisy = clean;
    for (auto& m : noisy) {
      m.relative_range_m += noise.range_sigma_m * rng.normal();
      m.aod_rad += noise.aod_sigma_rad * rng.normal();
    }
    const LocalizationSolution s = locate_ue(noisy, anchors);
    REQUIRE(s.converged);
    const double dx = s.ue_position.x - ue.x;
    const double dy = s.ue_position.y - ue.y;
    sq += dx * dx + dy * dy;
  }
  const double empirical = std::sqrt(sq / trials);
  CHECK(empirical > 0.85 * predicted);
  CHECK(empirical < 1.15 * predicted);
}

TEST_CASE("helpers are invariant to translating the receiver frame") {
  const Position2D shift{-112.0, 57.0};
  const Position2D ue{60.0, 40.0};
  const std::vector<Position2D> anchor_pos{{0.0, 11.1}, {12.3, 3.8}};
  std::vector<Position2D> moved;
  for (const auto& q : anchor_pos)
    moved.push_back({q.x + shift.x, q.y + shift.y});
  const Position2D ue_moved{ue.x + shift.x, ue.y + shift.y};

  const auto a = ideal_anchor_measurements(ue, 0.3, 1e-6, anchor_pos);
  const auto b = ideal_anchor_measurements(ue_moved, 0.3, 1e-6, moved, shift);
  for (std::size_t l = 0; l < a.size(); ++l) {
    CHECK(a[l].relative_range_m ==
          doctest::Approx(b[l].relative_range_m).epsilon(1e-12));
    CHECK(a[l].aod_rad == doctest::Approx(b[l].aod_rad).epsilon(1e-12));
  }
  const KnownAnchor ka = known_anchor(anchor_pos[0]);
  const KnownAnchor kb = known_anchor(moved[0], shift);
  CHECK(ka.range_to_bs_m == doctest::Approx(kb.range_to_bs_m).epsilon(1e-12));
  CHECK(ka.aoa_rad == doctest::Approx(kb.aoa_rad).epsilon(1e-12));
}
