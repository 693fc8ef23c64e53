#include "mpslam/signal.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace mpslam {

namespace {

Vec3 wave_dir(double az, double el) {
  return Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
}

RxPol rx_pol_of(int p) { return rx_is_horizontal(p) ? RxPol::H : RxPol::V; }

}  // namespace

VecXc steering_vector(const RfConfig& rf, double az, double el, RxPol pol) {
  const int m = rf.nrx();
  VecXc b(m);
  Vec3 k = wave_dir(az, el);
  double gain = (pol == RxPol::V) ? std::cos(el) : 1.0;
  for (int i = 0; i < m; ++i) {
    double phase = 2.0 * kPi * k.dot(rf.elements_wl.col(i));
    b(i) = gain * std::polar(1.0, phase);
  }
  return b;
}

VecXc freq_response(const RfConfig& rf, double d) {
  VecXc b(rf.nf);
  for (int i = 0; i < rf.nf; ++i) {
    double phase = -2.0 * kPi * (rf.freq(i) + rf.fc_hz) * d / kSpeedOfLight;
    b(i) = std::polar(1.0, phase);
  }
  return b;
}

VecX pol_ripple(const RfConfig& rf, int p) {
  const int m = rf.nrx();
  VecX r(m);
  for (int i = 0; i < m; ++i) {
    double psi = 2.0 * kPi * i / m;
    switch (p) {
      case kHH: r(i) = 1.0; break;
      case kHV: r(i) = 0.75 + 0.25 * std::cos(psi); break;
      case kVH: r(i) = 0.75 + 0.25 * std::sin(psi); break;
      // second harmonic: keeps {HH, HV, VH, VV} linearly independent (the
      // first three span {1, cos, sin}, so a first-harmonic VV would collapse
      // the basis to rank 3 for every element count)
      case kVV: r(i) = 0.75 + 0.25 * std::cos(2.0 * psi); break;
      default: throw std::out_of_range("pol_ripple: bad channel index");
    }
  }
  return r;
}

namespace {

// Antenna-side responses of the four channels and their angular derivatives.
void pol_columns(const RfConfig& rf, double az, double el, MatXc& A, MatXc* dA_daz,
                 MatXc* dA_del) {
  const int m = rf.nrx();
  A.resize(m, 4);
  if (dA_daz) dA_daz->resize(m, 4);
  if (dA_del) dA_del->resize(m, 4);

  Vec3 k = wave_dir(az, el);
  Vec3 dk_daz(-std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), 0.0);
  Vec3 dk_del(-std::sin(el) * std::cos(az), -std::sin(el) * std::sin(az), std::cos(el));
  double gv = std::cos(el), dgv = -std::sin(el);

  VecX ripple[4];
  for (int p = 0; p < 4; ++p) ripple[p] = pol_ripple(rf, p);

  for (int i = 0; i < m; ++i) {
    Vec3 r = rf.elements_wl.col(i);
    cd e = std::polar(1.0, 2.0 * kPi * k.dot(r));
    cd de_daz = cd(0.0, 2.0 * kPi * dk_daz.dot(r)) * e;
    cd de_del = cd(0.0, 2.0 * kPi * dk_del.dot(r)) * e;
    for (int p = 0; p < 4; ++p) {
      double rip = ripple[p](i);
      bool vert = !rx_is_horizontal(p);
      double g = vert ? gv * rip : rip;
      A(i, p) = g * e;
      if (dA_daz) (*dA_daz)(i, p) = g * de_daz;
      if (dA_del) (*dA_del)(i, p) = vert ? (dgv * rip * e + g * de_del) : (g * de_del);
    }
  }
}

}  // namespace

MatXc mpc_matrix(const RfConfig& rf, const MpcParams& mu) {
  MatXc A;
  pol_columns(rf, mu.az, mu.el, A, nullptr, nullptr);
  VecXc bf = freq_response(rf, mu.d);
  MatXc B(rf.dim(), 4);
  for (int p = 0; p < 4; ++p)
    for (int a = 0; a < rf.nrx(); ++a)
      B.block(a * rf.nf, p, rf.nf, 1) = A(a, p) * bf;
  return B;
}

void mpc_matrix_derivs(const RfConfig& rf, const MpcParams& mu, MatXc& B, MatXc& dB_dd,
                       MatXc& dB_daz, MatXc& dB_del) {
  MatXc A, dA_daz, dA_del;
  pol_columns(rf, mu.az, mu.el, A, &dA_daz, &dA_del);
  VecXc bf = freq_response(rf, mu.d);
  VecXc dbf(rf.nf);
  for (int i = 0; i < rf.nf; ++i)
    dbf(i) = cd(0.0, -2.0 * kPi * (rf.freq(i) + rf.fc_hz) / kSpeedOfLight) * bf(i);

  const int N = rf.dim();
  B.resize(N, 4); dB_dd.resize(N, 4); dB_daz.resize(N, 4); dB_del.resize(N, 4);
  for (int p = 0; p < 4; ++p) {
    for (int a = 0; a < rf.nrx(); ++a) {
      B.block(a * rf.nf, p, rf.nf, 1) = A(a, p) * bf;
      dB_dd.block(a * rf.nf, p, rf.nf, 1) = A(a, p) * dbf;
      dB_daz.block(a * rf.nf, p, rf.nf, 1) = dA_daz(a, p) * bf;
      dB_del.block(a * rf.nf, p, rf.nf, 1) = dA_del(a, p) * bf;
    }
  }
}

VecXc mpc_signal(const RfConfig& rf, const MpcParams& mu, const PolWeights& gamma) {
  return mpc_matrix(rf, mu) * gamma;
}

VecX dmc_psi(const RfConfig& rf, const DmcParams& dmc) {
  VecX psi = VecX::Zero(rf.nf);
  if (dmc.alpha <= 0.0) return psi;
  for (int q = 0; q < rf.nf; ++q) {
    double tau = q / rf.bw_hz;
    if (tau + 1e-15 >= dmc.tau_on_s)
      psi(q) = dmc.alpha / rf.nf * std::exp(-dmc.beta * rf.bw_hz * (tau - dmc.tau_on_s));
  }
  return psi;
}

MatXc dmc_covariance_freq(const RfConfig& rf, const DmcParams& dmc) {
  VecX psi = dmc_psi(rf, dmc);
  VecXc kappa(rf.nf);
  for (int m = 0; m < rf.nf; ++m) {
    cd acc = 0.0;
    for (int q = 0; q < rf.nf; ++q)
      acc += psi(q) * std::polar(1.0, -2.0 * kPi * m * q / rf.nf);
    kappa(m) = acc;
  }
  MatXc R(rf.nf, rf.nf);
  for (int i = 0; i < rf.nf; ++i)
    for (int j = 0; j < rf.nf; ++j)
      R(i, j) = (i >= j) ? kappa(i - j) : std::conj(kappa(j - i));
  return R;
}

NoiseCovariance::NoiseCovariance(const RfConfig& rf, const DmcParams& dmc)
    : nf_(rf.nf), nrx_(rf.nrx()) {
  dmc.validate(rf);
  VecX psi = dmc_psi(rf, dmc);
  U_.resize(nf_, nf_);
  double s = 1.0 / std::sqrt(static_cast<double>(nf_));
  for (int i = 0; i < nf_; ++i)
    for (int q = 0; q < nf_; ++q)
      U_(i, q) = s * std::polar(1.0, -2.0 * kPi * i * q / nf_);
  lambda_ = (nf_ * psi.array() + dmc.sigma_w * dmc.sigma_w).matrix();
  if (lambda_.minCoeff() <= 0.0)
    throw std::invalid_argument("noise covariance is singular: sigma_w = 0 with empty DMC bins");
}

VecXc NoiseCovariance::apply(const VecXc& v) const {
  if (v.size() != nf_ * nrx_) throw std::invalid_argument("apply: size mismatch");
  VecXc out(v.size());
  for (int a = 0; a < nrx_; ++a) {
    VecXc z = U_.adjoint() * v.segment(a * nf_, nf_);
    z.array() *= lambda_.array();
    out.segment(a * nf_, nf_) = U_ * z;
  }
  return out;
}

VecXc NoiseCovariance::solve(const VecXc& v) const {
  if (v.size() != nf_ * nrx_) throw std::invalid_argument("solve: size mismatch");
  VecXc out(v.size());
  for (int a = 0; a < nrx_; ++a) {
    VecXc z = U_.adjoint() * v.segment(a * nf_, nf_);
    z.array() /= lambda_.array();
    out.segment(a * nf_, nf_) = U_ * z;
  }
  return out;
}

VecXc NoiseCovariance::sample(RngStream& rng) const {
  VecXc out(nf_ * nrx_);
  for (int a = 0; a < nrx_; ++a) {
    VecXc z(nf_);
    for (int q = 0; q < nf_; ++q) z(q) = rng.cgauss() * std::sqrt(lambda_(q));
    out.segment(a * nf_, nf_) = U_ * z;
  }
  return out;
}

double NoiseCovariance::logdet() const {
  return nrx_ * lambda_.array().log().sum();
}

cd NoiseCovariance::whitened_dot(const VecXc& x, const VecXc& y) const {
  return x.dot(solve(y));  // Eigen dot conjugates the left argument
}

SnapshotSeries synthesize(const Trajectory& traj, const Vec3& pa,
                          const std::vector<Surface>& surfaces,
                          const std::vector<Feature>& features, const ArrayPose& pose,
                          const RfConfig& rf, const DmcParams& dmc,
                          const SynthesisOptions& opt, std::uint64_t seed, SynthTruth* truth) {
  rf.validate();
  dmc.validate(rf);
  if (traj.size() == 0) throw std::invalid_argument("synthesize: empty trajectory");
  if (features.empty()) throw std::invalid_argument("synthesize: empty feature catalog");

  const int n_feat = static_cast<int>(features.size());
  const int N = rf.dim();

  // Per-feature weights: drawn once; LOS (feature 0, empty chain) magnitude
  // calibrated so mean |s|^2 / (N sigma_w^2) hits the requested SNR.
  std::vector<PolWeights> gamma(n_feat);
  for (int f = 0; f < n_feat; ++f) {
    RngStream rs = derive_stream(seed, "gamma", static_cast<std::uint64_t>(f));
    PolWeights g;
    for (int p = 0; p < 4; ++p) g(p) = std::polar(opt.rel_mag[p], rs.uniform(-kPi, kPi));
    gamma[f] = g * features[f].gain;
  }
  // calibrate against the LOS response at the first snapshot
  {
    MpcParams mu0 = true_params(traj.p.front(), features.front(), surfaces, pose);
    double p_sig = mpc_signal(rf, mu0, gamma.front()).squaredNorm();
    double scale = 1.0;
    if (dmc.sigma_w > 0.0 && p_sig > 0.0) {
      double target = std::pow(10.0, opt.snr_db / 10.0) * N * dmc.sigma_w * dmc.sigma_w;
      scale = std::sqrt(target / p_sig);
    }
    for (auto& g : gamma) g *= scale;
  }

  const bool noisy = dmc.alpha > 0.0 || dmc.sigma_w > 0.0;
  std::optional<NoiseCovariance> cov;
  if (noisy) cov.emplace(rf, dmc);

  SnapshotSeries out;
  out.rf = rf;
  out.seed = seed;
  out.dt_s = traj.dt_s;
  out.y.reserve(traj.size());

  if (truth) {
    truth->features = features;
    truth->gamma = gamma;
    truth->vis.assign(traj.size(), std::vector<char>(n_feat, 0));
    truth->mu.assign(traj.size(), std::vector<MpcParams>(n_feat));
    truth->agent = traj.p;
  }

  for (int n = 0; n < traj.size(); ++n) {
    VecXc y = VecXc::Zero(N);
    for (int f = 0; f < n_feat; ++f) {
      bool vis = visible(traj.p[n], features[f], surfaces, pa);
      MpcParams mu = true_params(traj.p[n], features[f], surfaces, pose);
      if (truth) {
        truth->vis[n][f] = vis ? 1 : 0;
        truth->mu[n][f] = mu;
      }
      if (!vis) continue;
      y += mpc_signal(rf, mu, gamma[f]);
    }
    if (noisy) {
      RngStream noise = derive_stream(seed, "noise", static_cast<std::uint64_t>(n));
      y += cov->sample(noise);
    }
    out.y.push_back(std::move(y));
  }
  return out;
}

}  // namespace mpslam
