// SPDX-License-Identifier: MIT
#pragma once

/**
 * @file estimate.hpp
 * @brief Sensing-parameter extraction from clock-compensated CSI.
 *
 * Static processing: the zero-Doppler component of the compensated tensor is
 * extracted per antenna pair, a forward-smoothed covariance over joint
 * (subcarrier-subvector x receive-antenna) snapshots feeds a MUSIC range
 * spectrum evaluated on the known arrival-angle cut of each anchor, and the
 * departure angle is read off by transmit-side beamforming at the identified
 * cell.
 *
 * Dynamic processing: a DC-notch IIR along the symbol axis removes static
 * returns (moving-target detection), a zero-padded 2D DFT over
 * (subcarrier -> range, symbol -> Doppler) locates dynamic peaks, and the
 * arrival angle per peak comes from a receive-array DFT with quadratic
 * interpolation.
 *
 * All ranges produced here are RELATIVE: they carry the common reference
 * timing offset c*tau_{o,0} that localization later removes.
 */

#include <vector>

#include <Eigen/Dense>

#include "anchorsense/channel.hpp"
#include "anchorsense/common.hpp"

namespace asense {

/// Zero-Doppler (static) snapshot matrix; column m is the per-subcarrier
/// static amplitude seen by antenna pair m (transmit-major, as in CsiTensor).
struct StaticSnapshots {
  Eigen::MatrixXcd data;  ///< N x (m_tx * m_rx)
  Waveform waveform;
};

/**
 * @brief Averages the compensated CSI over symbols: the k-DFT bin at zero
 *        Doppler, per antenna pair.
 *
 * Requires the full antenna array (departure-angle processing needs every
 * transmit element). Dynamic paths leak into the zero bin at O(1/K).
 */
StaticSnapshots extract_zero_doppler(const CsiTensor& csi);

/// Spatial-smoothing MUSIC configuration.
struct MusicParams {
  int subvector = -1;  ///< smoothing subvector length along n; -1 -> N/2
  int n_sources = -1;  ///< signal-subspace dimension; -1 -> automatic
  /// Eigenvalue cut for automatic source counting, relative to the largest
  /// eigenvalue. The automatic search considers at most 64 candidates.
  double auto_rel_threshold = 1e-3;
};

/// Signal subspace of the smoothed static covariance.
struct MusicSubspace {
  Eigen::MatrixXcd basis;  ///< (subvector * m_rx) x n_sources, orthonormal
  int subvector = 0;
  int m_rx = 0;
  double delta_f_hz = 0.0;
};

/**
 * @brief Builds the signal subspace of the forward-smoothed covariance.
 *
 * Snapshots are subvectors of length `subvector` slid along the subcarrier
 * axis, stacked over receive antennas; transmit antennas contribute
 * independent looks. The covariance is accumulated with a Hermitian rank-k
 * update and the top eigenvectors are taken as the signal subspace.
 *
 * @throws EstimationError when the snapshot count (subarrays x m_tx) cannot
 *         support the requested source count.
 */
MusicSubspace music_subspace(const StaticSnapshots& snapshots,
                             const MusicParams& params = {});

/**
 * @brief MUSIC pseudospectrum over relative range at a fixed arrival angle.
 *
 * For each grid range R the joint steering vector
 * v[m_r * subvector + i] = e^{-j 2 pi i delta_f R / c} e^{j pi m_r sin(aoa)}
 * is projected onto the noise subspace; the returned value is
 * 1 / (||v||^2 - ||basis^H v||^2). Invariant to global complex scaling of
 * the snapshot data.
 */
std::vector<double> music_range_spectrum(const MusicSubspace& subspace,
                                         double aoa_rad,
                                         const std::vector<double>& range_grid_m);

/// One-shot convenience overload building the subspace internally.
std::vector<double> music_range_spectrum(const StaticSnapshots& snapshots,
                                         double aoa_rad,
                                         const std::vector<double>& range_grid_m,
                                         const MusicParams& params = {});

/// Range/departure-angle measurement of one anchor point.
struct AnchorMeasurement {
  int anchor_index = 0;
  double relative_range_m = 0.0;  ///< bistatic range biased by c*tau_{o,0}
  double aod_rad = 0.0;           ///< departure angle in the UE array frame
  double peak_power = 0.0;        ///< pseudospectrum peak (linear)
};

struct AnchorIdentifyParams {
  MusicParams music;
  /// Peak must exceed the spectrum median by this much to count.
  double detection_threshold_db = 20.0;
  int range_grid_points = 4096;  ///< grid over [0, R_max)
  int aod_grid_points = 1024;    ///< transmit-DFT padding
};

/**
 * @brief Identifies each anchor on its known arrival-angle cut.
 *
 * Per anchor: the MUSIC range spectrum at the anchor's (known) arrival angle
 * is searched for its highest peak, refined off-grid; the departure angle
 * maximizes the transmit-side beamforming power at the identified cell.
 * Anchors whose peak stays below the detection threshold are omitted from
 * the result (their anchor_index is missing).
 */
std::vector<AnchorMeasurement> identify_anchors(
    const StaticSnapshots& snapshots, const std::vector<double>& anchor_aoa_rad,
    const AnchorIdentifyParams& params = {});

/// Moving-target-detection filter configuration.
struct DopplerFilterParams {
  double pole = 0.9;  ///< denominator pole of the DC notch, in (0, 1)
  /// Leading output symbols dropped while the transient decays; -1 picks the
  /// shortest count with residual below -40 dB.
  int settle_symbols = -1;
};

/**
 * @brief Removes static (zero-Doppler) returns with the DC-notch IIR
 *        H(z) = (1 - z^{-1}) / (1 - pole z^{-1}) along the symbol axis.
 *
 * The returned tensor drops the first settle_symbols outputs, so its
 * waveform carries the reduced symbol count.
 * @throws EstimationError when no symbols survive the settling discard.
 */
CsiTensor doppler_filter(const CsiTensor& csi,
                         const DopplerFilterParams& params = {});

/// Range/Doppler/arrival-angle measurement of one dynamic target.
struct DynamicMeasurement {
  int target_index = 0;           ///< detection order (strongest first)
  double relative_range_m = 0.0;  ///< bistatic range biased by c*tau_{o,0}
  double aoa_rad = 0.0;           ///< arrival angle at the BS array
  double doppler_hz = 0.0;        ///< bistatic Doppler
  double peak_power = 0.0;        ///< detection-map peak (linear)
};

struct DynamicEstimateParams {
  int n_targets = 3;    ///< number of peaks requested
  int pad_range = 4;    ///< zero-padding factor, subcarrier axis
  int pad_doppler = 4;  ///< zero-padding factor, symbol axis
  /// Unpadded resolution cells excluded around each accepted peak.
  int guard_cells = 2;
  /// Peak must exceed the detection-map median by this much to count.
  double detection_threshold_db = 15.0;
  int aoa_grid_points = 512;  ///< receive-DFT padding
};

struct DynamicDetections {
  std::vector<DynamicMeasurement> targets;
  bool complete = false;  ///< n_targets qualifying peaks were found
};

/**
 * @brief Detects dynamic targets on the 2D range-Doppler map.
 *
 * Per antenna pair a zero-padded 2D DFT maps the filtered CSI to
 * (range, Doppler); powers are summed non-coherently over pairs, local
 * maxima above the detection threshold are accepted strongest-first with a
 * guard region, and each peak is interpolated off-grid. The arrival angle
 * per peak maximizes the receive-array DFT power with non-coherent
 * combining over transmit antennas.
 */
DynamicDetections estimate_dynamic(const CsiTensor& dynamic_csi,
                                   const DynamicEstimateParams& params = {});

}  // namespace asense
