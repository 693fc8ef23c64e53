#pragma once
// Shared domain types for the multipath phase tracking + SLAM library.
//
// Conventions used throughout:
//  - positions/distances in meters, angles in radians, time in seconds
//  - complex baseband snapshots are stacked frequency-major within antenna:
//    flat index = rx * nf + freq_index
//  - polarimetric transmission order is HH, HV, VH, VV where the first letter
//    is the transmit polarization and the second the receive polarization

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mpslam {

using cd = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using VecXc = Eigen::VectorXcd;
using MatXc = Eigen::MatrixXcd;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Polarimetric transmission channel index (Tx pol -> Rx pol).
enum Pol4 : int { kHH = 0, kHV = 1, kVH = 2, kVV = 3 };

// True when channel p is received on the horizontal port.
inline bool rx_is_horizontal(int p) { return p == kHH || p == kVH; }

// Radio/array configuration for one physical anchor.
//
// Element positions are given in wavelengths in the array-local frame
// (x = boresight, z = up); the frequency grid has nf points spaced bw/nf
// centered on the carrier: f_i = (i - (nf-1)/2) * bw / nf, i = 0..nf-1.
struct RfConfig {
  double fc_hz = 0.0;
  double bw_hz = 0.0;
  int nf = 0;                      // must be odd and >= 1
  Eigen::Matrix3Xd elements_wl;    // 3 x nrx, wavelengths, array-local frame

  int nrx() const { return static_cast<int>(elements_wl.cols()); }
  int dim() const { return nf * nrx(); }
  double lambda_c() const { return kSpeedOfLight / fc_hz; }
  // Baseband frequency of bin i (Hz), ascending, symmetric about 0.
  double freq(int i) const { return (i - (nf - 1) / 2) * bw_hz / nf; }
  // One-sided unambiguous distance window of the frequency grid (m).
  double delay_window_m() const { return kSpeedOfLight * nf / bw_hz; }

  void validate() const {
    if (fc_hz <= 0 || bw_hz <= 0) throw std::invalid_argument("rf: fc/bw must be positive");
    if (nf < 1 || nf % 2 == 0) throw std::invalid_argument("rf: nf must be odd and >= 1");
    if (nrx() < 1) throw std::invalid_argument("rf: need at least one element");
    if (bw_hz >= 2.0 * fc_hz) throw std::invalid_argument("rf: bandwidth exceeds carrier");
  }
};

// Structural parameters of one multipath component, in the array-local frame.
struct MpcParams {
  double d = 0.0;    // propagation distance, m; in (0, delay_window)
  double az = 0.0;   // azimuth of arrival from +x in the array x-y plane, [-pi, pi)
  double el = 0.0;   // elevation of arrival from the array x-y plane, [-pi/2, pi/2]
};

// Complex polarimetric path weights, order HH, HV, VH, VV.
using PolWeights = Eigen::Vector4cd;

// Dense multipath (DMC) + measurement noise parameters.
// The delay power spectrum is a one-sided exponential:
//   psi(tau) = (alpha / nf) * exp(-beta * bw * (tau - tau_on)) for tau >= tau_on
// sampled on the nf delay bins tau_q = q / bw, q = 0..nf-1.
struct DmcParams {
  double alpha = 0.0;     // total DMC power scale (psi sums to ~alpha/(nf*(1-e^-beta)))
  double beta = 0.0;      // normalized decay rate (per delay bin), > 0 when alpha > 0
  double tau_on_s = 0.0;  // onset delay, s, in [0, nf/bw)
  double sigma_w = 0.0;   // white measurement noise std per complex sample

  void validate(const RfConfig& rf) const {
    if (alpha < 0) throw std::invalid_argument("dmc: alpha must be >= 0");
    if (alpha > 0 && beta <= 0) throw std::invalid_argument("dmc: beta must be > 0 when alpha > 0");
    if (sigma_w < 0) throw std::invalid_argument("dmc: sigma_w must be >= 0");
    if (tau_on_s < 0 || tau_on_s >= rf.nf / rf.bw_hz)
      throw std::invalid_argument("dmc: tau_on outside the unambiguous delay window");
  }
};

// A time series of SIMO snapshots sharing one RfConfig.
struct SnapshotSeries {
  RfConfig rf;
  std::uint64_t seed = 0;
  double dt_s = 1.0;     // snapshot spacing, s
  std::vector<VecXc> y;  // each length rf.dim(), frequency-major within antenna

  int size() const { return static_cast<int>(y.size()); }
};

// Wrap an azimuth-like angle to [-pi, pi).
inline double wrap_azimuth(double a) {
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w < 0) w += 2.0 * kPi;
  return w - kPi;
}

// Wrap an (azimuth, elevation) pair: elevation reflects at +-pi/2 with an
// azimuth flip, then azimuth wraps to [-pi, pi).
inline void wrap_direction(double& az, double& el) {
  el = std::fmod(el, 2.0 * kPi);
  if (el > kPi) el -= 2.0 * kPi;
  if (el < -kPi) el += 2.0 * kPi;
  if (el > kPi / 2) { el = kPi - el; az += kPi; }
  else if (el < -kPi / 2) { el = -kPi - el; az += kPi; }
  az = wrap_azimuth(az);
}

}  // namespace mpslam
