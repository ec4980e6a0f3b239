// SPDX-License-Identifier: MIT

/**
 * @file test_channel.cpp
 * @brief Unit tests for CSI synthesis against an independent scalar-loop oracle.
 */

#include <cmath>
#include <complex>
#include <vector>

#include "anchorsense/channel.hpp"
#include "doctest.h"

using namespace asense;

namespace {

/// Straight transcription of the CSI model, one scalar at a time. Serves as
/// the oracle for the tensorized synthesizer.
cplx csi_scalar_oracle(const std::vector<PathParams>& paths, const ClockSequence& clock,
                       const Waveform& wf, int n, int k, int m) {
  const int m_t = m / wf.m_rx;
  const int m_r = m % wf.m_rx;
  cplx sum{0.0, 0.0};
  for (const auto& p : paths) {
    const double phase = -kTwoPi * n * (p.delay_s + clock.tmo_s[k]) * wf.delta_f_hz +
                         kTwoPi * k * p.doppler_hz * wf.t0_s +
                         kPi * (m_r * std::sin(p.aoa_rad) + m_t * std::sin(p.aod_rad));
    sum += p.coeff * std::polar(1.0, phase);
  }
  return sum * std::polar(1.0, clock.cfo_phase_rad[k]);
}

Waveform small_waveform() {
  Waveform wf;
  wf.n_subcarriers = 24;
  wf.n_symbols = 10;
  wf.m_tx = 2;
  wf.m_rx = 3;
  return wf;
}

Scene small_scene() {
  Scene scene;
  scene.ue_position = {60.0, 40.0};
  scene.ue_rotation_rho = deg2rad(20.0);
  scene.anchors = {{{0.0, 11.1}, 2.0}, {{12.3, 3.8}, 2.0}};
  scene.static_objects = {{{-20.0, 35.0}, 0.7}};
  scene.dynamic_targets = {{{30.2, 51.9}, 1.0, 3600.0, {}}};
  return scene;
}

}  // namespace

TEST_CASE("single static path, zero offsets: CSI is constant over symbols") {
  Waveform wf = small_waveform();
  PathParams path;
  path.delay_s = 100.0 / kSpeedOfLight;
  path.coeff = {0.3, -0.4};
  Rng rng(1);
  const auto csi =
      synthesize_csi({path}, zero_clock(wf.n_symbols), wf, {0.0}, rng);
  for (int k = 0; k < wf.n_symbols; ++k) {
    CHECK(std::abs(csi.at(0, k, 0) - path.coeff) < 1e-14);
  }
}

TEST_CASE("tensorized synthesis equals the scalar-loop oracle everywhere") {
  Waveform wf = small_waveform();
  Scene scene = small_scene();
  Rng rng_paths(21);
  const auto paths = derive_paths(scene, rng_paths);

  ClockSpec spec;
  spec.tmo_max_s = 0.3 * wf.max_delay_s();
  Rng rng_clock(22);
  const auto clock = sample_clock(rng_clock, wf.n_symbols, spec);

  Rng rng(23);
  const auto csi = synthesize_csi(paths, clock, wf, {0.0}, rng);

  double max_rel = 0.0;
  for (int m = 0; m < wf.pair_count(); ++m) {
    for (int k = 0; k < wf.n_symbols; ++k) {
      for (int n = 0; n < wf.n_subcarriers; ++n) {
        const cplx expected = csi_scalar_oracle(paths, clock, wf, n, k, m);
        const double rel = std::abs(csi.at(n, k, m) - expected) / std::abs(expected);
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  CHECK(max_rel < 1e-12);
}

TEST_CASE("exact phase compensation recovers the offset-free CSI") {
  // Multiplying entry (n, k) by e^{-j f~_o[k]} e^{j 2 pi n tau_o[k] df} must
  // undo the clock exactly: the model applies the offsets as pure phases.
  Waveform wf = small_waveform();
  Scene scene = small_scene();
  Rng rng_paths(31);
  const auto paths = derive_paths(scene, rng_paths);

  ClockSpec spec;
  spec.tmo_max_s = 0.3 * wf.max_delay_s();
  Rng rng_clock(32);
  const auto clock = sample_clock(rng_clock, wf.n_symbols, spec);

  Rng rng_a(33);
  auto csi = synthesize_csi(paths, clock, wf, {0.0}, rng_a);
  Rng rng_b(33);
  const auto reference = synthesize_csi(paths, zero_clock(wf.n_symbols), wf, {0.0}, rng_b);

  for (int m = 0; m < wf.pair_count(); ++m) {
    for (int k = 0; k < wf.n_symbols; ++k) {
      for (int n = 0; n < wf.n_subcarriers; ++n) {
        const cplx undo = std::polar(
            1.0, -clock.cfo_phase_rad[k] + kTwoPi * n * clock.tmo_s[k] * wf.delta_f_hz);
        CHECK(std::abs(csi.at(n, k, m) * undo - reference.at(n, k, m)) < 1e-12);
      }
    }
  }
}

TEST_CASE("two-tone magnitude pattern matches direct evaluation") {
  Waveform wf = small_waveform();
  PathParams a, b;
  a.delay_s = 80.0 / kSpeedOfLight;
  a.coeff = {1.0, 0.0};
  b.delay_s = 230.0 / kSpeedOfLight;
  b.coeff = {0.0, 0.6};
  Rng rng(2);
  const auto csi = synthesize_csi({a, b}, zero_clock(wf.n_symbols), wf, {0.0}, rng);
  for (int n = 0; n < wf.n_subcarriers; ++n) {
    const cplx expected =
        a.coeff * std::polar(1.0, -kTwoPi * n * a.delay_s * wf.delta_f_hz) +
        b.coeff * std::polar(1.0, -kTwoPi * n * b.delay_s * wf.delta_f_hz);
    CHECK(std::abs(csi.at(n, 0, 0)) == doctest::Approx(std::abs(expected)).epsilon(1e-12));
  }
}

TEST_CASE("delay beyond the unambiguous window is rejected unless allowed") {
  Waveform wf = small_waveform();
  PathParams path;
  path.delay_s = 1.05 * wf.max_delay_s();
  path.coeff = {1.0, 0.0};
  Rng rng(3);
  CHECK_THROWS_AS(synthesize_csi({path}, zero_clock(wf.n_symbols), wf, {0.0}, rng),
                  AliasingError);
  SynthesisOptions options;
  options.allow_delay_alias = true;
  CHECK_NOTHROW(synthesize_csi({path}, zero_clock(wf.n_symbols), wf, {0.0}, rng, options));
}

TEST_CASE("Doppler beyond the unambiguous window is rejected") {
  Waveform wf = small_waveform();
  PathParams path;
  path.delay_s = 100.0 / kSpeedOfLight;
  path.doppler_hz = 1.01 * wf.max_doppler_hz();
  path.coeff = {1.0, 0.0};
  Rng rng(4);
  CHECK_THROWS_AS(synthesize_csi({path}, zero_clock(wf.n_symbols), wf, {0.0}, rng),
                  AliasingError);
}

TEST_CASE("restricting the pair count synthesizes a prefix of the full tensor") {
  Waveform wf = small_waveform();
  Scene scene = small_scene();
  Rng rng_paths(41);
  const auto paths = derive_paths(scene, rng_paths);
  Rng rng_a(42), rng_b(42);
  const auto full = synthesize_csi(paths, zero_clock(wf.n_symbols), wf, {0.0}, rng_a);
  SynthesisOptions options;
  options.n_pairs = 2;
  const auto partial = synthesize_csi(paths, zero_clock(wf.n_symbols), wf, {0.0}, rng_b, options);
  REQUIRE(partial.pairs() == 2);
  for (int m = 0; m < 2; ++m) {
    for (int k = 0; k < wf.n_symbols; ++k) {
      for (int n = 0; n < wf.n_subcarriers; ++n) {
        CHECK(partial.at(n, k, m) == full.at(n, k, m));
      }
    }
  }
}

TEST_CASE("noise power estimate converges on a zero-signal tensor") {
  Waveform wf;
  wf.n_subcarriers = 128;
  wf.n_symbols = 64;
  wf.m_tx = 4;
  wf.m_rx = 8;
  const double sigma = 2.5e-3;
  Rng rng(99);
  const auto csi = synthesize_csi({}, zero_clock(wf.n_symbols), wf, {sigma}, rng);
  double sum = 0.0;
  for (const auto& v : csi.raw()) sum += std::norm(v);
  const std::size_t count = csi.raw().size();
  REQUIRE(count >= 200000);
  const double mean = sum / static_cast<double>(count);
  // Chi-square concentration: relative sd of the mean is 1/sqrt(count).
  const double three_se = 3.0 * sigma / std::sqrt(static_cast<double>(count));
  CHECK(std::abs(mean - sigma) < three_se);
}

TEST_CASE("static SNR definition collapses for a constant-magnitude response") {
  Waveform wf = small_waveform();
  PathParams path;
  path.delay_s = 150.0 / kSpeedOfLight;
  path.coeff = {0.02, 0.0};
  const auto h = static_amplitudes({path}, wf);
  const double sigma = 1e-4;
  // |h| = 0.02 on every subcarrier: SNR = |h|^2 / sigma^2.
  CHECK(snr_static_db(h, sigma) ==
        doctest::Approx(10.0 * std::log10(0.02 * 0.02 / sigma)).epsilon(1e-12));
  CHECK(snr_static_db(Eigen::MatrixXcd::Zero(8, 2), sigma) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("static amplitudes exclude moving paths and match the zero-Doppler sum") {
  Waveform wf = small_waveform();
  Scene scene = small_scene();
  Rng rng_paths(51);
  const auto paths = derive_paths(scene, rng_paths);
  const auto h = static_amplitudes(paths, wf);

  Rng rng(52);
  std::vector<PathParams> statics_only;
  for (const auto& p : paths) {
    if (p.doppler_hz == 0.0) statics_only.push_back(p);
  }
  const auto csi = synthesize_csi(statics_only, zero_clock(wf.n_symbols), wf, {0.0}, rng);
  for (int m = 0; m < wf.pair_count(); ++m) {
    for (int n = 0; n < wf.n_subcarriers; ++n) {
      CHECK(std::abs(h(n, m) - csi.at(n, 0, m)) < 1e-14);
    }
  }
}

TEST_CASE("line-of-sight augmentation appends a free-space path") {
  Scene scene = small_scene();
  Rng rng(61);
  auto paths = derive_paths(scene, rng);
  const auto augmented = add_los_path(paths, scene);
  REQUIRE(augmented.size() == paths.size() + 1);
  const auto& los = augmented.back();
  const double r = std::hypot(60.0, 40.0);
  CHECK(los.delay_s == doctest::Approx(r / kSpeedOfLight).epsilon(1e-12));
  CHECK(r == doctest::Approx(72.111).epsilon(1e-4));
  const double expected_gain = 0.1 * std::pow(0.1 / (4.0 * kPi * r), 2);
  CHECK(std::norm(los.coeff) == doctest::Approx(expected_gain).epsilon(1e-12));
  CHECK(los.doppler_hz == 0.0);
}
