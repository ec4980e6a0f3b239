// SPDX-License-Identifier: MIT

/**
 * @file estimate.cpp
 * @brief Static MUSIC identification and dynamic 2D-DFT estimation.
 */

#include "anchorsense/estimate.hpp"

#define LAPACK_COMPLEX_CUSTOM
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <cblas.h>
#include <lapacke.h>

#include "fft_util.hpp"

namespace asense {

namespace {

/// Three-point quadratic vertex in log power; 0 when the fit is not concave.
double quadratic_offset(double ym, double y0, double yp) {
  const double den = ym + yp - 2.0 * y0;
  if (!(den < 0.0)) return 0.0;
  const double d = 0.5 * (ym - yp) / den;
  return std::abs(d) <= 0.5 ? d : 0.0;
}

double log_power(double p) {
  return std::log(std::max(p, std::numeric_limits<double>::min()));
}

/// Unit-modulus range steering e^{-j 2 pi i delta_f R / c}, i = 0..len-1.
void fill_range_steering(double range_m, double delta_f_hz, int len,
                         Eigen::VectorXcd& v) {
  v.resize(len);
  const cplx rot =
      std::polar(1.0, -kTwoPi * delta_f_hz * range_m / kSpeedOfLight);
  cplx phase(1.0, 0.0);
  for (int i = 0; i < len; ++i) {
    v[i] = phase;
    phase *= rot;
    if ((i & 63) == 63) phase /= std::abs(phase);
  }
}

/// Collapses the receive dimension of the subspace basis at a fixed arrival
/// angle: row l of the result is sum_{m_r} e^{j pi m_r sin(aoa)}
/// conj(basis[m_r-block, l]), so |basis^H v| = |rows * range_steering|.
Eigen::MatrixXcd collapse_at_aoa(const MusicSubspace& sub, double aoa_rad) {
  const int len = sub.subvector;
  const int n_src = static_cast<int>(sub.basis.cols());
  Eigen::MatrixXcd rows = Eigen::MatrixXcd::Zero(n_src, len);
  for (int mr = 0; mr < sub.m_rx; ++mr) {
    const cplx a = std::polar(1.0, kPi * mr * std::sin(aoa_rad));
    rows += a * sub.basis.middleRows(mr * len, len).adjoint();
  }
  return rows;
}

/// Null spectrum dim - ||projection||^2 at one range; non-negative up to
/// rounding, and a smooth parabola of range near each source.
double null_spectrum_at(const Eigen::MatrixXcd& rows, double delta_f_hz,
                        int dim, double range_m, Eigen::VectorXcd& scratch) {
  fill_range_steering(range_m, delta_f_hz, static_cast<int>(rows.cols()),
                      scratch);
  return static_cast<double>(dim) - (rows * scratch).squaredNorm();
}

/// Pseudospectrum 1 / (dim - ||projection||^2) at one range.
double pseudospectrum_at(const Eigen::MatrixXcd& rows, double delta_f_hz,
                         int dim, double range_m, Eigen::VectorXcd& scratch) {
  return 1.0 /
         std::max(null_spectrum_at(rows, delta_f_hz, dim, range_m, scratch),
                  1e-12);
}

void require_full_array(const CsiTensor& csi, const char* what) {
  if (csi.pairs() != csi.waveform().pair_count())
    throw EstimationError(std::string(what) +
                          " needs CSI for the full antenna array");
}

struct MapPeak {
  int br = 0;
  int bd = 0;
  double power = 0.0;
};

int circular_distance(int a, int b, int n) {
  const int d = std::abs(a - b) % n;
  return std::min(d, n - d);
}

}  // namespace

StaticSnapshots extract_zero_doppler(const CsiTensor& csi) {
  require_full_array(csi, "zero-Doppler extraction");
  const Waveform& wf = csi.waveform();
  StaticSnapshots out;
  out.waveform = wf;
  out.data.resize(wf.n_subcarriers, csi.pairs());
  for (int m = 0; m < csi.pairs(); ++m)
    out.data.col(m) = csi.pair(m).rowwise().mean();
  return out;
}

MusicSubspace music_subspace(const StaticSnapshots& snapshots,
                             const MusicParams& params) {
  const Waveform& wf = snapshots.waveform;
  const int n_sub = static_cast<int>(snapshots.data.rows());
  if (static_cast<int>(snapshots.data.cols()) != wf.pair_count())
    throw EstimationError("snapshot columns must cover the full array");

  const int sub = params.subvector < 0 ? n_sub / 2 : params.subvector;
  if (sub < 1 || sub > n_sub)
    throw EstimationError("smoothing subvector length out of range");
  const int subarrays = n_sub - sub + 1;
  const int dim = sub * wf.m_rx;
  const int snaps = subarrays * wf.m_tx;

  int request = params.n_sources;
  if (request >= 0) {
    if (request < 1 || request >= dim)
      throw EstimationError("source count must lie in [1, subspace dim)");
    if (snaps < request + 1)
      throw EstimationError(
          "smoothed covariance is rank deficient: " + std::to_string(snaps) +
          " snapshots for " + std::to_string(request) +
          " sources; need at least " +
          std::to_string((request + 2 + wf.m_tx - 1) / wf.m_tx) +
          " subarrays (shorten the smoothing subvector)");
  } else {
    request = std::min({64, dim - 1, snaps});
    if (request < 1)
      throw EstimationError("too few smoothed snapshots for any source");
  }

  // Snapshot matrix: one column per (subarray shift, transmit antenna).
  Eigen::MatrixXcd x(dim, snaps);
  for (int s = 0; s < subarrays; ++s)
    for (int mt = 0; mt < wf.m_tx; ++mt) {
      const int col = s * wf.m_tx + mt;
      for (int mr = 0; mr < wf.m_rx; ++mr)
        x.block(mr * sub, col, sub, 1) =
            snapshots.data.block(s, mt * wf.m_rx + mr, sub, 1);
    }

  Eigen::MatrixXcd cov(dim, dim);
  cblas_zherk(CblasColMajor, CblasLower, CblasNoTrans, dim, snaps,
              1.0 / snaps, x.data(), dim, 0.0, cov.data(), dim);

  Eigen::VectorXd w(dim);
  Eigen::MatrixXcd z(dim, request);
  std::vector<lapack_int> isuppz(2 * std::max(1, request));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_zheevr(
      LAPACK_COL_MAJOR, 'V', 'I', 'L', dim, cov.data(), dim, 0.0, 0.0,
      dim - request + 1, dim, 0.0, &found, w.data(), z.data(), dim,
      isuppz.data());
  if (info != 0 || found < 1)
    throw EstimationError("eigendecomposition of the smoothed covariance failed");

  int keep = found;
  if (params.n_sources < 0) {
    // Eigenvalues arrive ascending; count those above the relative cut.
    const double lam_max = w[found - 1];
    if (!(lam_max > 0.0))
      throw EstimationError("static snapshots carry no energy");
    keep = 0;
    for (int i = 0; i < found; ++i)
      if (w[i] >= params.auto_rel_threshold * lam_max) ++keep;
    keep = std::max(keep, 1);
  }

  MusicSubspace out;
  out.subvector = sub;
  out.m_rx = wf.m_rx;
  out.delta_f_hz = wf.delta_f_hz;
  out.basis = z.rightCols(keep);
  return out;
}

std::vector<double> music_range_spectrum(const MusicSubspace& subspace,
                                         double aoa_rad,
                                         const std::vector<double>& range_grid_m) {
  const Eigen::MatrixXcd rows = collapse_at_aoa(subspace, aoa_rad);
  const int dim = subspace.subvector * subspace.m_rx;
  Eigen::VectorXcd scratch;
  std::vector<double> spectrum(range_grid_m.size());
  for (std::size_t i = 0; i < range_grid_m.size(); ++i)
    spectrum[i] = pseudospectrum_at(rows, subspace.delta_f_hz, dim,
                                    range_grid_m[i], scratch);
  return spectrum;
}

std::vector<double> music_range_spectrum(const StaticSnapshots& snapshots,
                                         double aoa_rad,
                                         const std::vector<double>& range_grid_m,
                                         const MusicParams& params) {
  return music_range_spectrum(music_subspace(snapshots, params), aoa_rad,
                              range_grid_m);
}

std::vector<AnchorMeasurement> identify_anchors(
    const StaticSnapshots& snapshots, const std::vector<double>& anchor_aoa_rad,
    const AnchorIdentifyParams& params) {
  const Waveform& wf = snapshots.waveform;
  if (params.range_grid_points < 4)
    throw EstimationError("range grid too small");
  const MusicSubspace subspace = music_subspace(snapshots, params.music);
  const int dim = subspace.subvector * subspace.m_rx;
  const double r_max = wf.max_range_m();
  const double step = r_max / params.range_grid_points;

  std::vector<AnchorMeasurement> result;
  Eigen::VectorXcd scratch;
  std::vector<double> grid(params.range_grid_points);
  for (std::size_t a = 0; a < anchor_aoa_rad.size(); ++a) {
    const Eigen::MatrixXcd rows = collapse_at_aoa(subspace, anchor_aoa_rad[a]);
    auto power = [&](double r) {
      return pseudospectrum_at(rows, wf.delta_f_hz, dim, r, scratch);
    };

    int best = 0;
    for (int i = 0; i < params.range_grid_points; ++i) {
      grid[i] = power(i * step);
      if (grid[i] > grid[best]) best = i;
    }
    std::vector<double> sorted = grid;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                     sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double peak_db = 10.0 * std::log10(grid[best] / median);
    if (peak_db < params.detection_threshold_db) continue;  // unidentified

    // Off-grid refinement around the winning cell. The pseudospectrum peak
    // is a near-pole (the noise-free null is millimetres wide), so fitting
    // its logarithm is ill-conditioned; the null spectrum itself is a clean
    // parabola of range near the source, which an additive noise floor only
    // shifts vertically. Fit the vertex there and shrink the stencil.
    auto null_at = [&](double r) {
      return null_spectrum_at(rows, wf.delta_f_hz, dim, r, scratch);
    };
    double r_hat = best * step;
    double span = step;
    for (int it = 0; it < 3; ++it) {
      const double dm = null_at(r_hat - span);
      const double d0 = null_at(r_hat);
      const double dp = null_at(r_hat + span);
      const double den = dm + dp - 2.0 * d0;
      if (den > 0.0)
        r_hat += std::clamp(0.5 * (dm - dp) / den, -1.0, 1.0) * span;
      span *= 0.1;
    }
    r_hat -= std::floor(r_hat / r_max) * r_max;  // fold into [0, R_max)

    // Transmit-side beamforming at the identified cell: matched-filter the
    // zero-Doppler data in range and receive angle, then sweep departure.
    Eigen::VectorXcd range_conj;
    fill_range_steering(r_hat, wf.delta_f_hz, wf.n_subcarriers, range_conj);
    Eigen::VectorXcd g = Eigen::VectorXcd::Zero(wf.m_tx);
    for (int mt = 0; mt < wf.m_tx; ++mt)
      for (int mr = 0; mr < wf.m_rx; ++mr) {
        const cplx rx_conj =
            std::polar(1.0, -kPi * mr * std::sin(anchor_aoa_rad[a]));
        // dot() conjugates its first argument, turning the stored
        // e^{-j...} steering into the matched filter e^{+j...}.
        g[mt] += rx_conj *
                 range_conj.dot(snapshots.data.col(mt * wf.m_rx + mr));
      }

    detail::Fft1D fft(params.aod_grid_points, FFTW_FORWARD);
    fft.zero_input();
    std::copy(g.data(), g.data() + wf.m_tx, fft.in());
    fft.execute();
    const int b_total = params.aod_grid_points;
    int b_best = 0;
    double p_best = -1.0;
    for (int b = 0; b < b_total; ++b) {
      const double p = std::norm(fft.out()[b]);
      if (p > p_best) {
        p_best = p;
        b_best = b;
      }
    }
    auto bin_power = [&](int b) {
      return std::norm(fft.out()[((b % b_total) + b_total) % b_total]);
    };
    const double off = quadratic_offset(log_power(bin_power(b_best - 1)),
                                        log_power(bin_power(b_best)),
                                        log_power(bin_power(b_best + 1)));
    double freq = (b_best + off) / b_total;  // cycles per element
    if (freq >= 0.5) freq -= 1.0;
    const double sin_aod = std::clamp(2.0 * freq, -1.0, 1.0);

    AnchorMeasurement meas;
    meas.anchor_index = static_cast<int>(a);
    meas.relative_range_m = r_hat;
    meas.aod_rad = std::asin(sin_aod);
    meas.peak_power = power(r_hat);
    result.push_back(meas);
  }
  return result;
}

CsiTensor doppler_filter(const CsiTensor& csi,
                         const DopplerFilterParams& params) {
  const Waveform& wf = csi.waveform();
  if (!(params.pole > 0.0 && params.pole < 1.0))
    throw EstimationError("notch pole must lie in (0, 1)");
  const int settle =
      params.settle_symbols < 0
          ? static_cast<int>(
                std::ceil(std::log(0.01) / std::log(params.pole)))
          : params.settle_symbols;
  if (settle < 0 || settle >= wf.n_symbols)
    throw EstimationError("no symbols survive the filter settling discard");

  Waveform out_wf = wf;
  out_wf.n_symbols = wf.n_symbols - settle;
  CsiTensor out(out_wf, csi.pairs());
  for (int m = 0; m < csi.pairs(); ++m) {
    auto src = csi.pair(m);
    auto dst = out.pair(m);
    for (int n = 0; n < wf.n_subcarriers; ++n) {
      cplx prev_in(0.0, 0.0);
      cplx prev_out(0.0, 0.0);
      for (int k = 0; k < wf.n_symbols; ++k) {
        const cplx y = src(n, k) - prev_in + params.pole * prev_out;
        prev_in = src(n, k);
        prev_out = y;
        if (k >= settle) dst(n, k - settle) = y;
      }
    }
  }
  return out;
}

DynamicDetections estimate_dynamic(const CsiTensor& dynamic_csi,
                                   const DynamicEstimateParams& params) {
  require_full_array(dynamic_csi, "dynamic estimation");
  const Waveform& wf = dynamic_csi.waveform();
  const int n_sub = wf.n_subcarriers;
  const int k_sym = wf.n_symbols;
  if (params.pad_range < 1 || params.pad_doppler < 1)
    throw EstimationError("padding factors must be positive");
  if (params.n_targets < 0)
    throw EstimationError("target count must be non-negative");
  const int b_r = params.pad_range * n_sub;
  const int b_d = params.pad_doppler * k_sym;

  // Backward 2D transform: range peaks at +tau, Doppler reads negated.
  detail::Fft2D fft(b_r, b_d, FFTW_BACKWARD);
  std::vector<double> map(static_cast<std::size_t>(b_r) * b_d, 0.0);
  for (int m = 0; m < dynamic_csi.pairs(); ++m) {
    fft.zero_input();
    auto y = dynamic_csi.pair(m);
    for (int n = 0; n < n_sub; ++n)
      for (int k = 0; k < k_sym; ++k)
        fft.in()[static_cast<std::size_t>(n) * b_d + k] = y(n, k);
    fft.execute();
    const cplx* out = fft.out();
    for (std::size_t i = 0; i < map.size(); ++i) map[i] += std::norm(out[i]);
  }

  std::vector<double> sorted = map;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                   sorted.end());
  const double floor =
      sorted[sorted.size() / 2] *
      std::pow(10.0, params.detection_threshold_db / 10.0);

  auto at = [&](int br, int bd) {
    return map[static_cast<std::size_t>(((br % b_r) + b_r) % b_r) * b_d +
               ((bd % b_d) + b_d) % b_d];
  };

  // Candidate local maxima above the detection floor.
  std::vector<MapPeak> candidates;
  for (int br = 0; br < b_r; ++br)
    for (int bd = 0; bd < b_d; ++bd) {
      const double p = at(br, bd);
      if (p <= floor) continue;
      bool is_max = true;
      for (int dr = -1; dr <= 1 && is_max; ++dr)
        for (int dd = -1; dd <= 1; ++dd) {
          if (dr == 0 && dd == 0) continue;
          const double q = at(br + dr, bd + dd);
          if (q > p || (q == p && (dr < 0 || (dr == 0 && dd < 0)))) {
            is_max = false;  // ties break toward the lexicographic first
            break;
          }
        }
      if (is_max) candidates.push_back({br, bd, p});
    }
  std::sort(candidates.begin(), candidates.end(),
            [](const MapPeak& a, const MapPeak& b) { return a.power > b.power; });

  const int guard_r = params.guard_cells * params.pad_range;
  const int guard_d = params.guard_cells * params.pad_doppler;
  std::vector<MapPeak> accepted;
  for (const MapPeak& cand : candidates) {
    if (static_cast<int>(accepted.size()) >= params.n_targets) break;
    bool clear = true;
    for (const MapPeak& acc : accepted)
      if (circular_distance(cand.br, acc.br, b_r) <= guard_r &&
          circular_distance(cand.bd, acc.bd, b_d) <= guard_d) {
        clear = false;
        break;
      }
    if (clear) accepted.push_back(cand);
  }

  DynamicDetections out;
  out.complete = static_cast<int>(accepted.size()) == params.n_targets;
  const double t0 = wf.t0_s;
  for (std::size_t idx = 0; idx < accepted.size(); ++idx) {
    const MapPeak& pk = accepted[idx];
    const double dbr = quadratic_offset(log_power(at(pk.br - 1, pk.bd)),
                                        log_power(pk.power),
                                        log_power(at(pk.br + 1, pk.bd)));
    const double dbd = quadratic_offset(log_power(at(pk.br, pk.bd - 1)),
                                        log_power(pk.power),
                                        log_power(at(pk.br, pk.bd + 1)));
    double br = pk.br + dbr;
    double bd = pk.bd + dbd;
    br -= std::floor(br / b_r) * b_r;  // [0, b_r)
    bd -= std::floor(bd / b_d) * b_d;
    if (bd > 0.5 * b_d) bd -= b_d;  // (-b_d/2, b_d/2]

    DynamicMeasurement meas;
    meas.target_index = static_cast<int>(idx);
    meas.relative_range_m =
        kSpeedOfLight * br / (static_cast<double>(b_r) * wf.delta_f_hz);
    double doppler = -bd / (static_cast<double>(b_d) * t0);
    const double f_lim = wf.max_doppler_hz();
    doppler = std::clamp(doppler, std::nextafter(-f_lim, 0.0),
                         std::nextafter(f_lim, 0.0));
    meas.doppler_hz = doppler;
    meas.peak_power = pk.power;

    // Arrival angle: evaluate the map off-grid per pair, then sweep the
    // receive array with non-coherent combining over transmit antennas.
    std::vector<cplx> z(dynamic_csi.pairs());
    for (int m = 0; m < dynamic_csi.pairs(); ++m) {
      auto y = dynamic_csi.pair(m);
      cplx acc(0.0, 0.0);
      for (int k = 0; k < k_sym; ++k) {
        const cplx col_rot = std::polar(1.0, kTwoPi * k * bd / b_d);
        cplx inner(0.0, 0.0);
        const cplx row_rot = std::polar(1.0, kTwoPi * br / b_r);
        cplx row_phase(1.0, 0.0);
        for (int n = 0; n < n_sub; ++n) {
          inner += y(n, k) * row_phase;
          row_phase *= row_rot;
          if ((n & 63) == 63) row_phase /= std::abs(row_phase);
        }
        acc += inner * col_rot;
      }
      z[m] = acc;
    }

    detail::Fft1D fft_rx(params.aoa_grid_points, FFTW_FORWARD);
    std::vector<double> aoa_power(params.aoa_grid_points, 0.0);
    for (int mt = 0; mt < wf.m_tx; ++mt) {
      fft_rx.zero_input();
      for (int mr = 0; mr < wf.m_rx; ++mr)
        fft_rx.in()[mr] = z[mt * wf.m_rx + mr];
      fft_rx.execute();
      for (int b = 0; b < params.aoa_grid_points; ++b)
        aoa_power[b] += std::norm(fft_rx.out()[b]);
    }
    int b_best = 0;
    for (int b = 1; b < params.aoa_grid_points; ++b)
      if (aoa_power[b] > aoa_power[b_best]) b_best = b;
    auto wrap_bin = [&](int b) {
      return aoa_power[((b % params.aoa_grid_points) + params.aoa_grid_points) %
                       params.aoa_grid_points];
    };
    const double off = quadratic_offset(log_power(wrap_bin(b_best - 1)),
                                        log_power(wrap_bin(b_best)),
                                        log_power(wrap_bin(b_best + 1)));
    double freq = (b_best + off) / params.aoa_grid_points;
    if (freq >= 0.5) freq -= 1.0;
    meas.aoa_rad = std::asin(std::clamp(2.0 * freq, -1.0, 1.0));

    out.targets.push_back(meas);
  }
  return out;
}

}  // namespace asense
