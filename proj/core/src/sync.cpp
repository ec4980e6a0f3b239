// SPDX-License-Identifier: MIT

/**
 * @file sync.cpp
 * @brief Clock-offset estimation: coarse tone search plus Newton refinement.
 */

#include "anchorsense/sync.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <cblas.h>

#include "fft_util.hpp"
#include "sync_detail.hpp"

namespace asense {

namespace {

/// DTFT value sum_n w_n e^{+j 2 pi n t}, t in cycles per sample.
cplx dtft(const cplx* w, int n, double t) {
  cplx acc(0.0, 0.0);
  const cplx rot = std::polar(1.0, kTwoPi * t);
  cplx phase(1.0, 0.0);
  for (int i = 0; i < n; ++i) {
    acc += w[i] * phase;
    phase *= rot;
    if ((i & 63) == 63) phase /= std::abs(phase);
  }
  return acc;
}

struct TonePeak {
  double freq = 0.0;  ///< cycles per sample, in [0, 1)
  cplx value{0.0, 0.0};
};

/// Locates the maximizer of |sum_n w_n e^{+j 2 pi n t}| over t in [0, 1).
TonePeak find_tone_peak(const cplx* w, int n, detail::Fft1D& fft,
                        int polish_iterations) {
  const int p_total = fft.size();
  fft.zero_input();
  std::copy(w, w + n, fft.in());
  fft.execute();
  const cplx* spectrum = fft.out();

  int p_best = 0;
  double best = -1.0;
  for (int p = 0; p < p_total; ++p) {
    const double mag2 = std::norm(spectrum[p]);
    if (mag2 > best) {
      best = mag2;
      p_best = p;
    }
  }

  // Quadratic interpolation of log power over the peak bin and neighbors.
  auto log_power = [&](int p) {
    const double v = std::norm(spectrum[((p % p_total) + p_total) % p_total]);
    return v > 0.0 ? std::log(v) : -745.0;
  };
  const double ym = log_power(p_best - 1);
  const double y0 = log_power(p_best);
  const double yp = log_power(p_best + 1);
  const double denom = ym + yp - 2.0 * y0;
  double offset = denom < 0.0 ? 0.5 * (ym - yp) / denom : 0.0;
  if (!(std::abs(offset) <= 0.5)) offset = 0.0;
  double t = (p_best + offset) / p_total;

  // Parabolic refinement on the continuous objective.
  double step = 1.0 / p_total;
  for (int it = 0; it < polish_iterations; ++it) {
    const double fm = std::norm(dtft(w, n, t - step));
    const double f0 = std::norm(dtft(w, n, t));
    const double fp = std::norm(dtft(w, n, t + step));
    const double den = fm + fp - 2.0 * f0;
    double d = den < 0.0 ? 0.5 * (fm - fp) / den : 0.0;
    if (!(std::abs(d) <= 1.0)) d = 0.0;
    t += d * step;
    step *= 0.25;
  }
  t -= std::floor(t);
  return {t, dtft(w, n, t)};
}

/// Mean of period-wrapped samples, branch-aligned to the first sample.
double branch_aligned_mean(const std::vector<double>& values, double period) {
  const double base = values.front();
  double acc = 0.0;
  for (const double v : values) acc += wrap_to_half(v - base, period);
  return base + acc / static_cast<double>(values.size());
}

/// Circular mean of angles, in (-pi, pi].
double circular_mean(const std::vector<double>& angles) {
  cplx acc(0.0, 0.0);
  for (const double a : angles) acc += std::polar(1.0, a);
  return std::arg(acc);
}

int resolve_pairs(const CsiTensor& csi, int n_pairs) {
  const int m = n_pairs < 0 ? csi.pairs() : n_pairs;
  if (m < 1 || m > csi.pairs())
    throw EstimationError("pair count out of range for CSI tensor");
  return m;
}

/// Weighted matrix t_{n,k} = e^{-j(c_k - (n - N/2) kappa_k)} y_{n,k} for
/// k >= 1. The centered index keeps the c and kappa blocks decoupled.
void build_weighted(const Eigen::MatrixXcd& y, const Eigen::VectorXd& c,
                    const Eigen::VectorXd& kappa, Eigen::MatrixXcd& tw) {
  const int n_sub = static_cast<int>(y.rows());
  const int k_total = static_cast<int>(y.cols());
  const double n0 = static_cast<double>(n_sub / 2);
  for (int k = 1; k < k_total; ++k) {
    cplx phase = std::polar(1.0, -c[k - 1] - n0 * kappa[k - 1]);
    const cplx rot = std::polar(1.0, kappa[k - 1]);
    for (int n = 0; n < n_sub; ++n) {
      tw(n, k - 1) = phase * y(n, k);
      phase *= rot;
      if ((n & 63) == 63) phase /= std::abs(phase);
    }
  }
}

/// G = Re{A^H A} via a Hermitian rank-k update on the lower triangle.
Eigen::MatrixXd gram_real(const Eigen::MatrixXcd& a) {
  const int n = static_cast<int>(a.rows());
  const int d = static_cast<int>(a.cols());
  Eigen::MatrixXcd g(d, d);
  cblas_zherk(CblasColMajor, CblasLower, CblasConjTrans, d, n, 1.0, a.data(),
              n, 0.0, g.data(), d);
  Eigen::MatrixXd gr = g.real();
  for (int j = 1; j < d; ++j)
    for (int i = 0; i < j; ++i) gr(i, j) = gr(j, i);
  return gr;
}

struct PairRefinement {
  Eigen::VectorXd c;      ///< residual phase offsets, k >= 1
  Eigen::VectorXd kappa;  ///< residual per-subcarrier slopes, k >= 1
  int sweeps = 0;
  bool converged = false;
};

/// Alternating damped Newton ascent of L(c, kappa) for one antenna pair.
PairRefinement refine_pair(const Eigen::MatrixXcd& y,
                           const RefineParams& params,
                           std::vector<double>* cost_history) {
  const int dim = static_cast<int>(y.cols()) - 1;

  PairRefinement result;
  result.c = Eigen::VectorXd::Zero(dim);
  result.kappa = Eigen::VectorXd::Zero(dim);

  double cost = detail::refine_cost(y, result.c, result.kappa);
  if (cost_history) cost_history->push_back(cost);

  Eigen::VectorXd grad(dim);
  Eigen::MatrixXd hess(dim, dim);

  // One damped Newton step on a single block (ascent on L, so the negated
  // Hessian is the base system matrix).
  auto block_step = [&](bool kappa_block) -> double {
    detail::refine_block_derivatives(y, result.c, result.kappa, kappa_block,
                                     grad, hess);
    double mu = 0.0;
    const double diag_scale =
        std::max(hess.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::MatrixXd a = -hess;
      a.diagonal().array() += mu;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
      bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
      Eigen::VectorXd step;
      if (ok) {
        step = ldlt.solve(grad);
        ok = step.allFinite();
      }
      if (ok) {
        Eigen::VectorXd c_new = result.c;
        Eigen::VectorXd k_new = result.kappa;
        (kappa_block ? k_new : c_new) += step;
        const double cost_new = detail::refine_cost(y, c_new, k_new);
        if (cost_new >= cost) {
          result.c = std::move(c_new);
          result.kappa = std::move(k_new);
          cost = cost_new;
          if (cost_history) cost_history->push_back(cost);
          return step.cwiseAbs().maxCoeff();
        }
      }
      mu = mu == 0.0 ? 1e-6 * diag_scale : mu * 10.0;
    }
    return 0.0;  // no admissible ascent direction at this iterate
  };

  for (int sweep = 0; sweep < params.max_sweeps; ++sweep) {
    const double step_c = block_step(false);
    const double step_k = block_step(true);
    result.sweeps = sweep + 1;
    if (std::max(step_c, step_k) < params.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace

namespace detail {

double refine_cost(const Eigen::MatrixXcd& y, const Eigen::VectorXd& c,
                   const Eigen::VectorXd& kappa) {
  Eigen::MatrixXcd tw(y.rows(), y.cols() - 1);
  build_weighted(y, c, kappa, tw);
  return (y.col(0) + tw.rowwise().sum()).squaredNorm();
}

/**
 * Analytic derivatives of L in the centered index u = n - N/2. With
 * t_{n,k} = e^{-j(c_k - u kappa_k)} y_{n,k} and
 * S_n = y_{n,0} + sum_{k>=1} t_{n,k}:
 *   dL/dc_k      =  2 sum_n Im{conj(S_n) t_{n,k}}
 *   H^c_{kl}     =  2 sum_n [Re{t_{n,k} conj(t_{n,l})}
 *                            - delta_{kl} Re{conj(S_n) t_{n,k}}]
 *   dL/dkappa_k  = -2 sum_n u Im{conj(S_n) t_{n,k}}
 *   H^kappa_{kl} =  2 sum_n u^2 [Re{t_{n,k} conj(t_{n,l})}
 *                                - delta_{kl} Re{conj(S_n) t_{n,k}}]
 */
void refine_block_derivatives(const Eigen::MatrixXcd& y,
                              const Eigen::VectorXd& c,
                              const Eigen::VectorXd& kappa, bool kappa_block,
                              Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
  const int n_sub = static_cast<int>(y.rows());
  Eigen::MatrixXcd tw(n_sub, y.cols() - 1);
  build_weighted(y, c, kappa, tw);
  const Eigen::VectorXcd s = y.col(0) + tw.rowwise().sum();

  if (!kappa_block) {
    const Eigen::VectorXcd b = tw.adjoint() * s;
    grad = -2.0 * b.imag();
    hess = 2.0 * gram_real(tw);
    hess.diagonal() -= 2.0 * b.real();
  } else {
    Eigen::VectorXd idx(n_sub);
    for (int n = 0; n < n_sub; ++n)
      idx[n] = static_cast<double>(n - n_sub / 2);
    const Eigen::MatrixXcd scaled = idx.asDiagonal() * tw;
    const Eigen::VectorXcd ns = idx.asDiagonal() * s;
    const Eigen::VectorXcd b = tw.adjoint() * ns;
    const Eigen::VectorXcd b2 = scaled.adjoint() * ns;
    grad = 2.0 * b.imag();
    hess = 2.0 * gram_real(scaled);
    hess.diagonal() -= 2.0 * b2.real();
  }
}

}  // namespace detail

SyncEstimate coarse_estimate(const CsiTensor& csi, int n_pairs,
                             const CoarseParams& params) {
  const Waveform& wf = csi.waveform();
  const int n_sub = wf.n_subcarriers;
  const int k_total = wf.n_symbols;
  const int m_used = resolve_pairs(csi, n_pairs);
  if (k_total < 2)
    throw EstimationError("coarse synchronization needs at least 2 symbols");
  if (params.pad_factor < 1)
    throw EstimationError("pad_factor must be positive");

  const double period = 1.0 / wf.delta_f_hz;
  detail::Fft1D fft(params.pad_factor * n_sub, FFTW_BACKWARD);

  SyncEstimate est;
  est.stage = SyncStage::kCoarse;
  est.rtmo_s.assign(k_total, 0.0);
  est.rcfo_rad.assign(k_total, 0.0);

  std::vector<cplx> w(n_sub);
  std::vector<double> tau_m(m_used);
  std::vector<double> cfo_m(m_used);
  for (int k = 1; k < k_total; ++k) {
    for (int m = 0; m < m_used; ++m) {
      int used = 0;
      for (int n = 0; n < n_sub; ++n) {
        const cplx corr = std::conj(csi.at(n, 0, m)) * csi.at(n, k, m);
        const double mag = std::abs(corr);
        w[n] = mag > 0.0 ? corr / mag : cplx(0.0, 0.0);
        if (mag > 0.0) ++used;
      }
      if (used == 0)
        throw EstimationError("coarse synchronization failed: zero CSI");
      const TonePeak peak =
          find_tone_peak(w.data(), n_sub, fft, params.polish_iterations);
      tau_m[m] = peak.freq * period;  // seconds, in [0, 1/delta_f)
      cfo_m[m] = std::arg(peak.value);
    }
    est.rtmo_s[k] = wrap_to_half(branch_aligned_mean(tau_m, period), period);
    est.rcfo_rad[k] = circular_mean(cfo_m);
  }
  return est;
}

void compensate_inplace(CsiTensor& csi, const SyncEstimate& est) {
  const Waveform& wf = csi.waveform();
  const int n_sub = wf.n_subcarriers;
  const int k_total = wf.n_symbols;
  if (static_cast<int>(est.rtmo_s.size()) != k_total ||
      static_cast<int>(est.rcfo_rad.size()) != k_total)
    throw EstimationError("sync estimate length does not match CSI symbols");

  Eigen::MatrixXcd factor(n_sub, k_total);
  for (int k = 0; k < k_total; ++k) {
    const double slope = kTwoPi * wf.delta_f_hz * est.rtmo_s[k];
    for (int n = 0; n < n_sub; ++n)
      factor(n, k) = std::polar(1.0, -est.rcfo_rad[k] + slope * n);
  }
  for (int m = 0; m < csi.pairs(); ++m) csi.pair(m).array() *= factor.array();
}

CsiTensor compensate(const CsiTensor& csi, const SyncEstimate& est) {
  CsiTensor out = csi;
  compensate_inplace(out, est);
  return out;
}

SyncEstimate refine_estimate(const CsiTensor& csi, int n_pairs,
                             const RefineParams& params) {
  const Waveform& wf = csi.waveform();
  const int k_total = wf.n_symbols;
  const int m_used = resolve_pairs(csi, n_pairs);
  if (k_total < 2)
    throw EstimationError("refinement needs at least 2 symbols");

  SyncEstimate est;
  est.stage = SyncStage::kRefined;
  est.rtmo_s.assign(k_total, 0.0);
  est.rcfo_rad.assign(k_total, 0.0);
  est.converged = true;
  est.iterations = 0;

  std::vector<PairRefinement> per_pair(m_used);
  for (int m = 0; m < m_used; ++m) {
    per_pair[m] = refine_pair(csi.pair(m), params, params.cost_history);
    est.iterations = std::max(est.iterations, per_pair[m].sweeps);
    est.converged = est.converged && per_pair[m].converged;
  }

  // Per-pair results hold the band-center phase; rcfo_rad is referenced to
  // subcarrier 0, so shift by N/2 slopes before averaging.
  const double n0 = static_cast<double>(wf.n_subcarriers / 2);
  const double to_seconds = 1.0 / (kTwoPi * wf.delta_f_hz);
  std::vector<double> c_m(m_used), kappa_m(m_used);
  for (int k = 1; k < k_total; ++k) {
    for (int m = 0; m < m_used; ++m) {
      c_m[m] = wrap_angle(per_pair[m].c[k - 1] + n0 * per_pair[m].kappa[k - 1]);
      kappa_m[m] = per_pair[m].kappa[k - 1];
    }
    est.rcfo_rad[k] = circular_mean(c_m);
    double kappa_mean = 0.0;
    for (const double v : kappa_m) kappa_mean += v;
    kappa_mean /= static_cast<double>(m_used);
    est.rtmo_s[k] = kappa_mean * to_seconds;
  }
  return est;
}

SyncEstimate combine(const SyncEstimate& coarse, const SyncEstimate& residual) {
  if (coarse.rtmo_s.size() != residual.rtmo_s.size() ||
      coarse.rcfo_rad.size() != residual.rcfo_rad.size())
    throw EstimationError("sync estimate lengths do not match");
  SyncEstimate out = coarse;
  out.stage = SyncStage::kRefined;
  out.iterations = residual.iterations;
  out.converged = residual.converged;
  for (std::size_t k = 0; k < out.rtmo_s.size(); ++k) {
    out.rtmo_s[k] += residual.rtmo_s[k];
    out.rcfo_rad[k] = wrap_angle(out.rcfo_rad[k] + residual.rcfo_rad[k]);
  }
  return out;
}

double phase_at_subcarrier(const SyncEstimate& est, double delta_f_hz,
                           int n_ref, int k) {
  if (k < 0 || k >= static_cast<int>(est.rcfo_rad.size()))
    throw EstimationError("symbol index out of range");
  return wrap_angle(est.rcfo_rad[k] -
                    kTwoPi * n_ref * delta_f_hz * est.rtmo_s[k]);
}

TheoreticalErrorPrediction predict_error(const Eigen::VectorXcd& h_static,
                                         double sigma_n_sq) {
  if (sigma_n_sq <= 0.0)
    throw EstimationError("noise variance must be positive");
  double p0 = 0.0, p1 = 0.0, p2 = 0.0;
  for (int n = 0; n < h_static.size(); ++n) {
    const double mag2 = std::norm(h_static[n]);
    p0 += mag2;
    p1 += static_cast<double>(n) * mag2;
    p2 += static_cast<double>(n) * static_cast<double>(n) * mag2;
  }
  // Second moment of n about the power-weighted band center n_w = p1 / p0;
  // this is the index variance that sets the slope accuracy regardless of
  // the index origin.
  const double p2c = p0 > 0.0 ? p2 - p1 * p1 / p0 : 0.0;
  if (p0 <= 0.0 || p2c <= 0.0)
    throw EstimationError("static channel power must be positive");
  TheoreticalErrorPrediction pred;
  pred.rcfo_error_std = std::sqrt(sigma_n_sq / p0);
  pred.rtmo_error_std = std::sqrt(sigma_n_sq / p2c);
  return pred;
}

TheoreticalErrorPrediction predict_error_combined(
    const Eigen::MatrixXcd& h_static, double sigma_n_sq) {
  const int m_total = static_cast<int>(h_static.cols());
  if (m_total < 1) throw EstimationError("need at least one antenna pair");
  double var_c = 0.0, var_k = 0.0;
  for (int m = 0; m < m_total; ++m) {
    const TheoreticalErrorPrediction p =
        predict_error(h_static.col(m), sigma_n_sq);
    var_c += p.rcfo_error_std * p.rcfo_error_std;
    var_k += p.rtmo_error_std * p.rtmo_error_std;
  }
  const double inv_m2 = 1.0 / (static_cast<double>(m_total) * m_total);
  TheoreticalErrorPrediction pred;
  pred.rcfo_error_std = std::sqrt(var_c * inv_m2);
  pred.rtmo_error_std = std::sqrt(var_k * inv_m2);
  return pred;
}

Eigen::VectorXd predict_bias_c(const Eigen::VectorXcd& h_static,
                               const Eigen::MatrixXcd& noise) {
  if (noise.rows() != h_static.size())
    throw EstimationError("noise rows must match channel length");
  const double p0 = h_static.squaredNorm();
  if (p0 <= 0.0)
    throw EstimationError("static channel power must be positive");
  return (h_static.adjoint() * noise).imag().transpose() / p0;
}

Eigen::VectorXd predict_bias_kappa(const Eigen::VectorXcd& h_static,
                                   const Eigen::MatrixXcd& noise) {
  if (noise.rows() != h_static.size())
    throw EstimationError("noise rows must match channel length");
  const int n_sub = static_cast<int>(h_static.size());
  const double p0 = h_static.squaredNorm();
  if (p0 <= 0.0)
    throw EstimationError("static channel power must be positive");
  double p1 = 0.0;
  for (int n = 0; n < n_sub; ++n)
    p1 += static_cast<double>(n) * std::norm(h_static[n]);
  const double n_w = p1 / p0;
  Eigen::VectorXd idx(n_sub);
  for (int n = 0; n < n_sub; ++n) idx[n] = static_cast<double>(n) - n_w;
  const Eigen::VectorXcd hn = idx.asDiagonal() * h_static;
  const double p2c = hn.squaredNorm();
  if (p2c <= 0.0)
    throw EstimationError("static channel power must be positive");
  return -(hn.adjoint() * noise).imag().transpose() / p2c;
}

double static_spectrum_peak(const Eigen::VectorXcd& h_static, int pad_factor) {
  const int n_sub = static_cast<int>(h_static.size());
  if (n_sub < 1) throw EstimationError("empty channel vector");
  if (pad_factor < 1) throw EstimationError("pad_factor must be positive");
  detail::Fft1D fft(pad_factor * n_sub, FFTW_BACKWARD);
  const TonePeak peak = find_tone_peak(h_static.data(), n_sub, fft, 3);
  return std::abs(peak.value) / static_cast<double>(n_sub);
}

double influence_ratio(double y_s_peak, double p_s, double sigma_n_sq, int n,
                       int k) {
  if (p_s <= 0.0) throw EstimationError("static power must be positive");
  if (sigma_n_sq <= 0.0)
    throw EstimationError("noise variance must be positive");
  if (n < 1 || k < 1) throw EstimationError("grid sizes must be positive");
  return std::sqrt(7.0 / (static_cast<double>(n) * k)) * y_s_peak /
         (2.0 * std::sqrt(p_s));
}

}  // namespace asense
