#pragma once
// Polarimetric SIMO forward model and noise synthesis.
//
// One specular path with structural parameters mu = (d, az, el) and complex
// polarimetric weights gamma (HH, HV, VH, VV) contributes
//   s(mu, gamma) = B(mu) * gamma,
// where column p of B is the element-wise product of the receive steering
// vector for p's receive polarization, a fixed per-element polarization gain
// signature for p (transmit response is an ideal unit omni), and the
// frequency response exp(-j 2 pi (f_i + fc) d / c). The carrier term keeps
// sub-wavelength distance changes observable in the phase.

#include <vector>

#include "mpslam/geometry.hpp"
#include "mpslam/rng.hpp"
#include "mpslam/types.hpp"

namespace mpslam {

enum class RxPol { H, V };

// Receive steering vector (length nrx) for arrival direction (az, el) in the
// array frame: element m carries phase +2 pi k(az, el) . r_m (r_m in
// wavelengths). H has unit gain per element; V carries a cos(el) roll-off.
VecXc steering_vector(const RfConfig& rf, double az, double el, RxPol pol);

// Frequency response of a path of length d (meters): length-nf vector with
// entry i = exp(-j 2 pi (f_i + fc) d / c).
VecXc freq_response(const RfConfig& rf, double d);

// Fixed per-element polarization gain signature of transmission channel p
// (independent of direction; VV's additional cos(el) lives in the V steering
// vector). Signatures are smooth ripples over the element index that keep the
// four basis columns linearly independent for nrx >= 4.
VecX pol_ripple(const RfConfig& rf, int p);

// N x 4 polarimetric basis matrix B(mu), N = nf * nrx, frequency-major
// within antenna; column order HH, HV, VH, VV.
MatXc mpc_matrix(const RfConfig& rf, const MpcParams& mu);

// B and its structural derivatives dB/dd, dB/daz, dB/del.
void mpc_matrix_derivs(const RfConfig& rf, const MpcParams& mu, MatXc& B, MatXc& dB_dd,
                       MatXc& dB_daz, MatXc& dB_del);

// s(mu, gamma) = B(mu) gamma.
VecXc mpc_signal(const RfConfig& rf, const MpcParams& mu, const PolWeights& gamma);

// Delay power profile psi sampled on the nf delay bins tau_q = q / bw.
VecX dmc_psi(const RfConfig& rf, const DmcParams& dmc);

// Frequency-domain DMC covariance: Hermitian PSD Toeplitz nf x nf matrix
// with first column kappa[m] = sum_q psi(tau_q) exp(-j 2 pi m q / nf).
MatXc dmc_covariance_freq(const RfConfig& rf, const DmcParams& dmc);

// Implicit full noise covariance R = I_nrx (x) R_f + sigma_w^2 I, exploited
// blockwise; never materializes the N x N matrix. R_f diagonalizes in the
// DFT basis, so apply/solve/sample and log-determinant are O(nf^2) per
// antenna block.
class NoiseCovariance {
 public:
  NoiseCovariance(const RfConfig& rf, const DmcParams& dmc);

  VecXc apply(const VecXc& v) const;
  VecXc solve(const VecXc& v) const;
  // Draw from CN(0, R) via the exact covariance square root per block.
  VecXc sample(RngStream& rng) const;
  double logdet() const;
  // Real inner product form x^H R^{-1} y (returns the complex value).
  cd whitened_dot(const VecXc& x, const VecXc& y) const;

  int nf() const { return nf_; }
  int nrx() const { return nrx_; }
  const VecX& block_eigenvalues() const { return lambda_; }

 private:
  int nf_, nrx_;
  MatXc U_;       // unitary DFT synthesis basis, nf x nf
  VecX lambda_;   // eigenvalues of R_f + sigma_w^2 I (= nf * psi_q + sigma^2)
};

// One planted path: feature identity plus its drawn polarimetric weights.
struct PlantedPath {
  int feature_index = 0;
  PolWeights gamma = PolWeights::Zero();
};

struct SynthesisOptions {
  double snr_db = 25.0;          // LOS signal-to-white-noise target (mean per sample)
  double rel_mag[4] = {1.0, 0.35, 0.25, 0.6};  // relative pol magnitudes HH, HV, VH, VV
};

// Ground truth accompanying a synthesized series.
struct SynthTruth {
  std::vector<Feature> features;           // catalog used (same order as vis/mu columns)
  std::vector<PolWeights> gamma;           // per feature, drawn once, includes chain gain
  std::vector<std::vector<char>> vis;      // [n][feature] visibility
  std::vector<std::vector<MpcParams>> mu;  // [n][feature] true parameters
  std::vector<Vec3> agent;                 // agent position per snapshot
};

// Synthesize the full snapshot series: per snapshot, the sum of all visible
// features' specular contributions plus a DMC + white noise draw. Weights are
// drawn once per feature (stream "gamma"), scaled by chain gain, with the LOS
// magnitude calibrated to opt.snr_db against dmc.sigma_w; noise uses stream
// ("noise", n). Deterministic for a fixed seed.
SnapshotSeries synthesize(const Trajectory& traj, const Vec3& pa,
                          const std::vector<Surface>& surfaces,
                          const std::vector<Feature>& features, const ArrayPose& pose,
                          const RfConfig& rf, const DmcParams& dmc,
                          const SynthesisOptions& opt, std::uint64_t seed,
                          SynthTruth* truth = nullptr);

}  // namespace mpslam
