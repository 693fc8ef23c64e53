#pragma once
// Successive path extraction on one snapshot: factorized beamspace + delay
// grid search, polarimetric weight estimation, dense-tail noise estimation,
// and joint damped Gauss-Newton refinement of the structural parameters.

#include <optional>
#include <vector>

#include "mpslam/signal.hpp"
#include "mpslam/types.hpp"

namespace mpslam {

// Angle/delay search grids plus the delay shifting matrix.
//
// A_f has nf rows indexed by the centered frequency offsets
// k = -(nf-1)/2 .. +(nf-1)/2 and nf_prime columns with
// A_f(k, i) = exp(-j 2 pi k f'_i), f'_i = i / nf_prime (0-based), so column i
// matches a path at distance d_i = (c nf / bw) * i / nf_prime. Index 0 (d = 0)
// exists in the matrix but is never returned by the search.
struct InterpGrids {
  VecX az;       // azimuth samples, radians
  VecX el;       // elevation samples, radians
  int nf_prime = 0;
  MatXc A_f;     // nf x nf_prime

  int cells() const { return static_cast<int>(az.size() * el.size()); }
};

struct GridSpec {
  int n_az = 360;
  int n_el = 90;
  double az_min = -kPi / 2, az_max = kPi / 2;  // front hemisphere defaults
  double el_min = -kPi / 2, el_max = kPi / 2;
  int nf_prime_mult = 8;  // nf_prime = mult * nf
};

InterpGrids make_grids(const RfConfig& rf, const GridSpec& spec);

// Distance represented by delay column i.
double grid_distance(const RfConfig& rf, const InterpGrids& g, int i);

struct PeakResult {
  int ia = 0, ie = 0, id = 0;  // grid indices (azimuth, elevation, delay)
  MpcParams mu;                // grid-cell parameters
  double stat = 0.0;           // |b^H Y conj(a_f)| at the peak
};

// argmax over the grid of |b(az, el)^H Y conj(a_f_i)| with b the sum of the
// H and V receive steering vectors and Y the nrx x nf reshape of y.
// Factorized as (beamspace GEMM) then (delay GEMM) per chunk of angle cells;
// ties break toward the lowest flat index (az-major, then el, then delay).
// Deterministic for any thread count.
PeakResult peak_search(const RfConfig& rf, const InterpGrids& g, const VecXc& y);

// Ordinary LS polarimetric weights: argmin |y - B gamma|. Throws
// std::runtime_error when B is numerically rank-deficient (degenerate
// array/polarization configuration). Optional output: (B^H B)^{-1}
// (unscaled complex error covariance shape).
PolWeights weights_ls(const MatXc& B, const VecXc& y,
                      Eigen::Matrix4cd* cov_unscaled = nullptr);

// Whitened LS weights: argmin (y - B gamma)^H R^{-1} (y - B gamma). Optional
// output: (B^H R^{-1} B)^{-1}, the exact error covariance of gamma-hat.
PolWeights weights_wls(const MatXc& B, const VecXc& y, const NoiseCovariance& R,
                       Eigen::Matrix4cd* cov = nullptr);

struct Detection {
  MpcParams mu;
  PolWeights gamma = PolWeights::Zero();
  Eigen::Vector4d wvar = Eigen::Vector4d::Zero();  // per-pol weight error variance
  double energy = 0.0;    // |B gamma|^2 removed by this component
  double beta_cum = 0.0;  // cumulative captured-energy ratio after this component
};

// Successive cancellation: repeat { peak_search on the residual; weights on
// the residual (WLS when cov given, else LS); subtract } until k_budget
// components, or the cumulative captured-energy ratio reaches beta_max.
// total_energy (default |y|^2) is the denominator of the ratio; beta_offset
// (default 0) pre-loads energy already captured by components external to
// this call. wvar holds diag((B^H R^-1 B)^-1) when cov is given, else the
// unscaled diag((B^H B)^-1).
std::vector<Detection> detect_mpcs(const RfConfig& rf, const InterpGrids& g, const VecXc& y,
                                   int k_budget, double beta_max,
                                   const NoiseCovariance* cov = nullptr,
                                   double total_energy = 0.0, double beta_offset = 0.0);

// Estimate DMC + white-noise parameters from a residual snapshot: per-antenna
// IDFT to the delay domain, averaged power profile, onset at the peak bin,
// white floor from the median of pre-onset bins (exponential-median
// corrected), (alpha, beta) from log-linear regression on the decaying tail.
// Tail shorter than 4 usable bins -> white-only (alpha = 0). All-zero input
// -> alpha = 0, sigma_w = 1e-12.
DmcParams estimate_dmc(const RfConfig& rf, const VecXc& residual);

struct GnOptions {
  int max_iters = 50;
  double step_tol = 1e-6;      // scaled step norm (d in carrier wavelengths)
  double lambda_init = 1e-3;
  double lambda_min = 1e-8, lambda_max = 1e4;
  double lambda_down = 0.3, lambda_up = 10.0;
};

// Joint damped Gauss-Newton refinement of the detections' structural
// parameters against y under noise covariance R (variable projection: the
// weights are re-solved by joint WLS at every iterate). Cost is the whitened
// residual power; steps that would increase it are rejected with increased
// damping. Updates mu, gamma, and wvar in place.
void gn_refine(const RfConfig& rf, std::vector<Detection>& dets, const VecXc& y,
               const NoiseCovariance& R, const GnOptions& opt = {});

}  // namespace mpslam
