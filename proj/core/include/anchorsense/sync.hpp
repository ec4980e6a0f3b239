// SPDX-License-Identifier: MIT
#pragma once

/**
 * @file sync.hpp
 * @brief Estimation and compensation of per-symbol clock offsets.
 *
 * An unsynchronized link imprints every OFDM symbol k with a relative timing
 * offset (RTMO) tau_k and a relative carrier phase offset (RCFO) c_k, both
 * measured against symbol 0. Synchronization runs in two stages:
 *
 *  1. coarse_estimate(): per symbol, correlate against symbol 0 across
 *     subcarriers and locate the single-tone delay peak with a zero-padded
 *     FFT plus quadratic interpolation. Estimates are averaged over antenna
 *     pairs.
 *  2. refine_estimate(): after compensating the coarse values, maximize the
 *     coherent accumulation cost L(c, kappa) = sum_n |sum_k e^{-j(c_k - n
 *     kappa_k)} y_{n,k}|^2 with an alternating damped Newton method. The
 *     maximizer gives residual offsets that are added to the coarse stage.
 *
 * Closed-form predictions of the residual error statistics (mean and
 * variance) and of the static-path influence on dynamic sensing are provided
 * for validation and for theory curves.
 *
 * Error bookkeeping. A per-symbol estimate is a (phase, slope) pair and the
 * two component errors are strongly correlated when the phase is referenced
 * to subcarrier 0: an error in the slope kappa tilts the whole phase ramp,
 * dragging the edge-referenced phase with it. The pair decorrelates when the
 * phase is referenced to the power-weighted band center, which is where the
 * closed-form per-component variances hold. Internally the refinement
 * therefore parameterizes the ramp against the centered subcarrier index
 * (n - N/2); the public rcfo_rad field remains referenced to subcarrier 0,
 * and phase_at_subcarrier() evaluates the ramp wherever an error metric
 * needs it.
 */

#include <vector>

#include <Eigen/Dense>

#include "anchorsense/channel.hpp"

namespace asense {

/// Which stages produced a SyncEstimate.
enum class SyncStage { kCoarse, kRefined };

/// Per-symbol relative clock-offset estimates (element 0 is identically 0).
struct SyncEstimate {
  std::vector<double> rtmo_s;    ///< relative timing offsets [s], length K
  std::vector<double> rcfo_rad;  ///< relative carrier phase offsets [rad]
  SyncStage stage = SyncStage::kCoarse;
  int iterations = 0;    ///< Newton sweeps used (refined stage only)
  bool converged = true; ///< false if the iteration hit its sweep limit
};

/// Tuning knobs for the coarse single-tone search.
struct CoarseParams {
  int pad_factor = 8;        ///< FFT zero-padding multiple of N
  int polish_iterations = 3; ///< quadratic peak-interpolation refinements
};

/// Tuning knobs for the refined alternating Newton maximization.
struct RefineParams {
  int max_sweeps = 50;    ///< one sweep = one c update plus one kappa update
  double tol = 1e-10;     ///< stop when max step infinity-norm falls below
  /// Optional: accepted-step cost values are appended here (per antenna
  /// pair, sequentially). Useful for monotonicity checks; leave null to skip.
  std::vector<double>* cost_history = nullptr;
};

/// Closed-form residual-error statistics for the refined stage.
struct TheoreticalErrorPrediction {
  double rcfo_error_std = 0.0;  ///< std of each residual c_k [rad], k >= 1
  /// std of each residual kappa_k [rad per subcarrier index], k >= 1.
  double rtmo_error_std = 0.0;
  /// rtmo_error_std converted to seconds via delta_tau = kappa/(2 pi df).
  double rtmo_error_std_seconds(double delta_f_hz) const {
    return rtmo_error_std / (kTwoPi * delta_f_hz);
  }
};

/**
 * @brief Coarse RTMO/RCFO estimation from raw CSI.
 *
 * For each symbol k >= 1 and antenna pair m, forms the unit-modulus
 * normalized correlation of symbol k against symbol 0 across subcarriers and
 * maximizes its delay spectrum |sum_n w_n e^{j 2 pi n tau delta_f}| on a
 * pad_factor*N FFT grid, refined by quadratic interpolation. The phase at
 * the maximizer estimates the RCFO. RTMO estimates are averaged over pairs
 * arithmetically after aligning them to a common wrap branch (delays are
 * only observable modulo 1/delta_f); RCFO estimates are averaged circularly.
 *
 * @param csi     raw CSI tensor
 * @param n_pairs number of antenna pairs to average (<= csi.pairs(); -1 = all;
 *                default 4 balances accuracy and cost)
 */
SyncEstimate coarse_estimate(const CsiTensor& csi, int n_pairs = 4,
                             const CoarseParams& params = {});

/// Multiplies each CSI entry by e^{-j c_k} e^{j 2 pi n delta_f tau_k}.
void compensate_inplace(CsiTensor& csi, const SyncEstimate& est);

/// Out-of-place variant of compensate_inplace().
CsiTensor compensate(const CsiTensor& csi, const SyncEstimate& est);

/**
 * @brief Refined residual-offset estimation from coarse-compensated CSI.
 *
 * Maximizes L(c, kappa) = sum_n |S_n|^2 with
 * S_n = sum_k e^{-j(c_k - n kappa_k)} y_{n,k} over the 2(K-1) free
 * parameters (c_0 = kappa_0 = 0 pinned), independently per antenna pair,
 * using alternating damped Newton steps (c block, then kappa block) started
 * from zero. The iteration works in the centered index n - N/2, which
 * decouples the two blocks and makes the alternation converge in a handful
 * of sweeps; the result is converted back so that rcfo_rad[k] is the phase
 * at subcarrier 0 and rtmo_s[k] = kappa_k / (2 pi delta_f). The per-pair
 * maximizers are averaged (see coarse_estimate).
 *
 * The accepted-step cost sequence is non-decreasing; non-convergence within
 * max_sweeps returns the best iterate with converged = false.
 */
SyncEstimate refine_estimate(const CsiTensor& csi, int n_pairs = 4,
                             const RefineParams& params = {});

/// Sums coarse and residual estimates into a refined total.
SyncEstimate combine(const SyncEstimate& coarse, const SyncEstimate& residual);

/**
 * @brief Per-symbol phase ramp of an estimate evaluated at subcarrier n_ref.
 *
 * Returns wrap(rcfo_rad[k] - 2 pi n_ref delta_f rtmo_s[k]). With integer
 * n_ref the value is invariant under delay-window aliasing of rtmo_s, so
 * differences of this quantity between an estimate and the truth are
 * well-defined error metrics. Use n_ref near N/2 to measure the
 * decorrelated phase error described by predict_error().
 */
double phase_at_subcarrier(const SyncEstimate& est, double delta_f_hz,
                           int n_ref, int k);

/**
 * @brief Residual error statistics of the refined stage for one antenna pair.
 *
 * For a static combined channel h_n (length N) observed under additive
 * complex Gaussian noise of per-entry variance sigma_n_sq, the residual
 * offsets after refinement fluctuate with
 *   var{c_k}     = sigma_n_sq / sum_n |h_n|^2,
 *   var{kappa_k} = sigma_n_sq / sum_n (n - n_w)^2 |h_n|^2,
 * independently of K, where n_w = sum_n n |h_n|^2 / sum_n |h_n|^2 is the
 * power-weighted band center and c is referenced there (the component errors
 * decorrelate at n_w; see phase_at_subcarrier()). The kappa variance is
 * invariant to the index origin and equals the error of the slope estimate
 * itself. Errors are measured against the true relative offsets, i.e. the
 * symbol-0 reference noise is part of the error. Returned as standard
 * deviations.
 */
TheoreticalErrorPrediction predict_error(const Eigen::VectorXcd& h_static,
                                         double sigma_n_sq);

/**
 * @brief Error statistics after averaging M independent per-pair estimates.
 *
 * Columns of h_static are the per-pair static channels; the averaged
 * estimate has variance (1/M^2) sum_m var_m per component.
 */
TheoreticalErrorPrediction predict_error_combined(
    const Eigen::MatrixXcd& h_static, double sigma_n_sq);

/**
 * @brief First-order estimation bias of the refined stage given one noise
 *        realization.
 *
 * With static channel h_n and the noise image z_{n,k} riding on symbol
 * k >= 1 (columns of `noise`, K-1 of them), the linearized maximizer of the
 * refined cost deviates by
 *   delta_c_k     =  sum_n Im{conj(h_n) z_{n,k}} / sum_n |h_n|^2,
 *   delta_kappa_k = -sum_n (n - n_w) Im{conj(h_n) z_{n,k}}
 *                     / sum_n (n - n_w)^2 |h_n|^2,
 * with n_w the power-weighted band center as in predict_error() and c
 * referenced there. The symbol-0 noise adds a common term to every c_k
 * which is not part of this per-symbol expression.
 */
Eigen::VectorXd predict_bias_c(const Eigen::VectorXcd& h_static,
                               const Eigen::MatrixXcd& noise);
/// Companion of predict_bias_c() for the kappa components.
Eigen::VectorXd predict_bias_kappa(const Eigen::VectorXcd& h_static,
                                   const Eigen::MatrixXcd& noise);

/**
 * @brief Peak amplitude of the static-channel delay spectrum.
 *
 * Returns max_tau (1/N) |sum_n h_n e^{j 2 pi n tau delta_f}|, located with a
 * zero-padded FFT and parabolic refinement. Used by influence_ratio().
 */
double static_spectrum_peak(const Eigen::VectorXcd& h_static,
                            int pad_factor = 8);

/**
 * @brief Ratio gauging how strongly static paths perturb dynamic-path
 *        estimation relative to the thermal noise floor.
 *
 * ratio = sqrt(7 / (N K)) * y_s_peak / (2 sqrt(p_s)), where y_s_peak is the
 * static delay-spectrum peak amplitude (see static_spectrum_peak()) and p_s
 * the mean static-channel power. Values well below 1 mean residual
 * clock-offset leakage of static paths is negligible next to noise;
 * sigma_n_sq cancels and is accepted only for interface symmetry.
 */
double influence_ratio(double y_s_peak, double p_s, double sigma_n_sq, int n,
                       int k);

}  // namespace asense
