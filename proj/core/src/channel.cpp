// SPDX-License-Identifier: MIT

/**
 * @file channel.cpp
 * @brief Tensorized CSI synthesis and SNR helpers.
 */

#include "anchorsense/channel.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace asense {

cplx steering(int m, int m_rx_count, double aoa_rad, double aod_rad) {
  const int m_t = m / m_rx_count;
  const int m_r = m % m_rx_count;
  return std::polar(1.0, kPi * (m_r * std::sin(aoa_rad) + m_t * std::sin(aod_rad)));
}

CsiTensor synthesize_csi(const std::vector<PathParams>& paths, const ClockSequence& clock,
                         const Waveform& waveform, const NoiseModel& noise, Rng& rng,
                         const SynthesisOptions& options) {
  const int N = waveform.n_subcarriers;
  const int K = waveform.n_symbols;
  const int M = (options.n_pairs < 0) ? waveform.pair_count() : options.n_pairs;
  const int L = static_cast<int>(paths.size());
  if (clock.symbols() != K) {
    throw ScenarioError("clock sequence length " + std::to_string(clock.symbols()) +
                        " does not match waveform symbol count " + std::to_string(K));
  }
  if (M < 1 || M > waveform.pair_count()) {
    throw ScenarioError("requested antenna pair count out of range");
  }

  double tmo_max = 0.0;
  for (double t : clock.tmo_s) tmo_max = std::max(tmo_max, t);
  for (const auto& path : paths) {
    if (std::abs(path.doppler_hz) >= waveform.max_doppler_hz()) {
      throw AliasingError("path Doppler " + std::to_string(path.doppler_hz) +
                          " Hz outside the unambiguous window " +
                          std::to_string(waveform.max_doppler_hz()) + " Hz");
    }
    if (!options.allow_delay_alias &&
        (path.delay_s < 0.0 || path.delay_s + tmo_max >= waveform.max_delay_s())) {
      throw AliasingError(
          "total delay " + std::to_string((path.delay_s + tmo_max) * 1e6) +
          " us outside the unambiguous window " + std::to_string(waveform.max_delay_s() * 1e6) +
          " us; enable allow_delay_alias to fold deliberately");
    }
  }

  // Per-path factors: subcarrier response A (N x L), symbol response D (K x L),
  // and per-pair gains xi_l * a_l(m). The clock factor C (N x K) is common to
  // all pairs.
  Eigen::MatrixXcd sub_response(N, L);
  Eigen::MatrixXcd sym_response(K, L);
  for (int l = 0; l < L; ++l) {
    const double wn = -kTwoPi * paths[l].delay_s * waveform.delta_f_hz;
    for (int n = 0; n < N; ++n) sub_response(n, l) = std::polar(1.0, wn * n);
    const double wk = kTwoPi * paths[l].doppler_hz * waveform.t0_s;
    for (int k = 0; k < K; ++k) sym_response(k, l) = std::polar(1.0, wk * k);
  }

  Eigen::MatrixXcd clock_factor(N, K);
  for (int k = 0; k < K; ++k) {
    const double wn = -kTwoPi * clock.tmo_s[k] * waveform.delta_f_hz;
    const cplx common = std::polar(1.0, clock.cfo_phase_rad[k]);
    for (int n = 0; n < N; ++n) clock_factor(n, k) = common * std::polar(1.0, wn * n);
  }

  CsiTensor csi(waveform, M);
  Eigen::VectorXcd gains(L);
  for (int m = 0; m < M; ++m) {
    for (int l = 0; l < L; ++l) {
      gains(l) = paths[l].coeff *
                 steering(m, waveform.m_rx, paths[l].aoa_rad, paths[l].aod_rad);
    }
    auto out = csi.pair(m);
    out.noalias() = sub_response * (sym_response * gains.asDiagonal()).transpose();
    out.array() *= clock_factor.array();
  }

  if (noise.sigma_n_sq > 0.0) {
    for (auto& value : csi.raw()) value += rng.complex_normal(noise.sigma_n_sq);
  }
  return csi;
}

Eigen::MatrixXcd static_amplitudes(const std::vector<PathParams>& paths,
                                   const Waveform& waveform) {
  const int N = waveform.n_subcarriers;
  const int M = waveform.pair_count();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(N, M);
  for (const auto& path : paths) {
    if (path.doppler_hz != 0.0) continue;
    const double wn = -kTwoPi * path.delay_s * waveform.delta_f_hz;
    for (int m = 0; m < M; ++m) {
      const cplx gain = path.coeff * steering(m, waveform.m_rx, path.aoa_rad, path.aod_rad);
      for (int n = 0; n < N; ++n) h(n, m) += gain * std::polar(1.0, wn * n);
    }
  }
  return h;
}

double static_power(const Eigen::MatrixXcd& h_static) {
  if (h_static.size() == 0) return 0.0;
  return h_static.squaredNorm() / static_cast<double>(h_static.size());
}

double snr_static_db(const Eigen::MatrixXcd& h_static, double sigma_n_sq) {
  if (sigma_n_sq <= 0.0) throw EstimationError("noise power must be positive");
  const double p_s = static_power(h_static);
  if (p_s == 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(p_s / sigma_n_sq);
}

}  // namespace asense
