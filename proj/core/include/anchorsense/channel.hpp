// SPDX-License-Identifier: MIT
#pragma once

/**
 * @file channel.hpp
 * @brief Frequency-domain CSI synthesis under clock asynchronism.
 *
 * The channel model works directly at channel-state-information level: the
 * complex gain of subcarrier n, symbol k and antenna pair m is
 *
 *   y[n,k,m] = e^{j f~_o[k]} * sum_l  xi_l * e^{-j 2 pi n (tau_l + tau_o[k]) df}
 *                                   * e^{j 2 pi k f_D,l T0} * a_l(m)  +  z[n,k,m]
 *
 * with a_l(m) = e^{j pi (m_r sin(theta_l) + m_t sin(phi_l))} for half-wavelength
 * arrays, m = m_t * M_r + m_r (transmit-major flattening), and z circularly
 * symmetric complex Gaussian noise, i.i.d. over (n, k, m).
 */

#include <vector>

#include <Eigen/Dense>

#include "anchorsense/common.hpp"
#include "anchorsense/rng.hpp"
#include "anchorsense/scene.hpp"

namespace asense {

/// OFDM numerology and array sizes.
struct Waveform {
  double delta_f_hz = 480e3;   ///< subcarrier spacing
  int n_subcarriers = 256;     ///< N
  double t0_s = 62.5e-6;       ///< symbol interval
  int n_symbols = 160;         ///< K
  int m_tx = 4;                ///< UE array size M_t
  int m_rx = 8;                ///< BS array size M_r
  double carrier_freq_hz = 3e9;

  double bandwidth_hz() const { return n_subcarriers * delta_f_hz; }
  /// Unambiguous delay window 1/df [s].
  double max_delay_s() const { return 1.0 / delta_f_hz; }
  /// Unambiguous range window c/df [m].
  double max_range_m() const { return kSpeedOfLight / delta_f_hz; }
  /// Unambiguous Doppler half-window 1/(2*T0) [Hz].
  double max_doppler_hz() const { return 0.5 / t0_s; }
  int pair_count() const { return m_tx * m_rx; }
};

/// Complex CSI over (subcarrier n, symbol k, antenna pair m), n fastest.
/// Only the first `pairs()` antenna pairs are populated when synthesis was
/// restricted for speed; per-pair views are column-major N x K matrices.
class CsiTensor {
 public:
  CsiTensor() = default;
  CsiTensor(const Waveform& waveform, int pairs)
      : waveform_(waveform),
        pairs_(pairs),
        values_(static_cast<std::size_t>(waveform.n_subcarriers) * waveform.n_symbols * pairs) {}

  const Waveform& waveform() const { return waveform_; }
  int subcarriers() const { return waveform_.n_subcarriers; }
  int symbols() const { return waveform_.n_symbols; }
  int pairs() const { return pairs_; }

  cplx& at(int n, int k, int m) {
    return values_[(static_cast<std::size_t>(m) * symbols() + k) * subcarriers() + n];
  }
  const cplx& at(int n, int k, int m) const {
    return values_[(static_cast<std::size_t>(m) * symbols() + k) * subcarriers() + n];
  }

  /// N x K view of antenna pair m (subcarriers down the columns).
  Eigen::Map<Eigen::MatrixXcd> pair(int m) {
    return {values_.data() + static_cast<std::size_t>(m) * symbols() * subcarriers(),
            subcarriers(), symbols()};
  }
  Eigen::Map<const Eigen::MatrixXcd> pair(int m) const {
    return {values_.data() + static_cast<std::size_t>(m) * symbols() * subcarriers(),
            subcarriers(), symbols()};
  }

  std::vector<cplx>& raw() { return values_; }
  const std::vector<cplx>& raw() const { return values_; }

 private:
  Waveform waveform_{};
  int pairs_ = 0;
  std::vector<cplx> values_;
};

struct NoiseModel {
  double sigma_n_sq = 0.0;  ///< total complex noise variance per sample [W]

  /// Thermal noise power k_B * F_n * T * B for the given bandwidth.
  static NoiseModel thermal(double bandwidth_hz, double noise_figure = 10.0,
                            double temperature_k = 290.0) {
    return {kBoltzmann * noise_figure * temperature_k * bandwidth_hz};
  }
};

struct SynthesisOptions {
  /// Synthesize only the first n antenna pairs (-1 = all M_t*M_r). The first
  /// pairs are m_t = 0 with m_r ascending, which is what the sync stage uses.
  int n_pairs = -1;
  /// Permit total delays tau_l + tau_o[k] at or beyond the unambiguous window
  /// 1/df. Off by default: silent folding would corrupt ground truth. Folding
  /// is harmless only when the caller reasons modulo the window (e.g. offset
  /// invariance studies), which is why this is an explicit opt-in.
  bool allow_delay_alias = false;
};

/**
 * @brief Synthesizes the CSI tensor for the given paths, clock state and noise.
 *
 * @throws AliasingError if any tau_l + tau_o[k] falls outside [0, 1/df) and
 *         aliasing was not explicitly allowed, or if any |f_D| >= 1/(2*T0).
 */
CsiTensor synthesize_csi(const std::vector<PathParams>& paths, const ClockSequence& clock,
                         const Waveform& waveform, const NoiseModel& noise, Rng& rng,
                         const SynthesisOptions& options = {});

/// Noise-free static frequency response h_s[n, m]: contribution of all
/// zero-Doppler paths with clock offsets zeroed. Shape N x M.
Eigen::MatrixXcd static_amplitudes(const std::vector<PathParams>& paths,
                                   const Waveform& waveform);

/// Averaged per-subcarrier static SNR in dB:
/// SNR_S = mean_m sum_n |h_s[n,m]|^2 / (N * sigma_n^2).
/// @throws EstimationError for empty columns (no static power).
double snr_static_db(const Eigen::MatrixXcd& h_static, double sigma_n_sq);

/// Mean per-subcarrier static power P_s = mean_m (1/N) sum_n |h_s[n,m]|^2 [W].
double static_power(const Eigen::MatrixXcd& h_static);

/// Steering phase of antenna pair m for arrival angle theta / departure angle
/// phi with half-wavelength spacing; m = m_t * M_r + m_r.
cplx steering(int m, int m_rx_count, double aoa_rad, double aod_rad);

}  // namespace asense
