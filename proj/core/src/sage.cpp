#include "mpslam/sage.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "mpslam/parallel.hpp"

namespace mpslam {

InterpGrids make_grids(const RfConfig& rf, const GridSpec& spec) {
  if (spec.n_az < 1 || spec.n_el < 1 || spec.nf_prime_mult < 1)
    throw std::invalid_argument("grids: sizes must be positive");
  InterpGrids g;
  g.az.resize(spec.n_az);
  for (int i = 0; i < spec.n_az; ++i)
    g.az(i) = spec.n_az == 1 ? 0.5 * (spec.az_min + spec.az_max)
                             : spec.az_min + (spec.az_max - spec.az_min) * i / (spec.n_az - 1.0);
  g.el.resize(spec.n_el);
  for (int i = 0; i < spec.n_el; ++i)
    g.el(i) = spec.n_el == 1 ? 0.5 * (spec.el_min + spec.el_max)
                             : spec.el_min + (spec.el_max - spec.el_min) * i / (spec.n_el - 1.0);
  g.nf_prime = spec.nf_prime_mult * rf.nf;
  g.A_f.resize(rf.nf, g.nf_prime);
  int half = (rf.nf - 1) / 2;
  for (int r = 0; r < rf.nf; ++r) {
    int k = r - half;
    for (int i = 0; i < g.nf_prime; ++i) {
      double fp = static_cast<double>(i) / g.nf_prime;
      g.A_f(r, i) = std::polar(1.0, -2.0 * kPi * k * fp);
    }
  }
  return g;
}

double grid_distance(const RfConfig& rf, const InterpGrids& g, int i) {
  return rf.delay_window_m() * static_cast<double>(i) / g.nf_prime;
}

PeakResult peak_search(const RfConfig& rf, const InterpGrids& g, const VecXc& y) {
  if (y.size() != rf.dim()) throw std::invalid_argument("peak_search: size mismatch");
  const int n_az = static_cast<int>(g.az.size());
  const int n_el = static_cast<int>(g.el.size());
  const int cells = n_az * n_el;
  const int nfp = g.nf_prime;

  // y reshaped antenna-by-frequency (rows are antennas)
  Eigen::Map<const Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Y(
      y.data(), rf.nrx(), rf.nf);
  MatXc Afc = g.A_f.conjugate();

  struct Best {
    double stat2 = -1.0;
    long flat = -1;
  };
  std::vector<Best> chunk_best;
  std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges;
  std::mutex mu;

  parallel_chunks(static_cast<std::size_t>(cells), [&](std::size_t b, std::size_t e) {
    // beamspace for this chunk of angle cells
    const int m = static_cast<int>(e - b);
    MatXc Bc(rf.nrx(), m);
    for (int c = 0; c < m; ++c) {
      int ci = static_cast<int>(b) + c;
      double az = g.az(ci / n_el);
      double el = g.el(ci % n_el);
      Bc.col(c) = steering_vector(rf, az, el, RxPol::H) + steering_vector(rf, az, el, RxPol::V);
    }
    MatXc W = Bc.adjoint() * Y;   // m x nf
    MatXc Pm = W * Afc;           // m x nf_prime
    // The delay window is cyclic, so the first and last resolution cell both
    // alias the zero-delay bin; peaks there are excluded (near-zero and
    // near-window distances are non-physical for any tracked reflection).
    const int cell = std::max(1, nfp / rf.nf);
    Best best;
    for (int c = 0; c < m; ++c) {
      for (int i = cell; i <= nfp - cell; ++i) {
        double s2 = std::norm(Pm(c, i));
        long flat = (static_cast<long>(b) + c) * nfp + i;
        if (s2 > best.stat2) {
          best.stat2 = s2;
          best.flat = flat;
        }
      }
    }
    std::lock_guard<std::mutex> lock(mu);
    chunk_best.push_back(best);
    chunk_ranges.emplace_back(b, e);
  });

  // merge partials in ascending chunk order so ties resolve to the lowest
  // flat index independent of thread scheduling
  std::vector<std::size_t> order(chunk_best.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b2) { return chunk_ranges[a].first < chunk_ranges[b2].first; });
  Best overall;
  for (std::size_t i : order)
    if (chunk_best[i].stat2 > overall.stat2) overall = chunk_best[i];

  PeakResult r;
  long flat = overall.flat;
  r.id = static_cast<int>(flat % nfp);
  long ci = flat / nfp;
  r.ie = static_cast<int>(ci % n_el);
  r.ia = static_cast<int>(ci / n_el);
  r.mu.d = grid_distance(rf, g, r.id);
  r.mu.az = g.az(r.ia);
  r.mu.el = g.el(r.ie);
  r.stat = std::sqrt(std::max(0.0, overall.stat2));
  return r;
}

namespace {

// Concentrated fit power at mu: the polarimetric weights are solved out, and
// the carrier phase is a common scalar on every basis column, so it cancels in
// the projection.  The statistic therefore varies on the envelope
// (c / bandwidth) scale in distance, free of carrier-period ripple.
double concentrated_power(const RfConfig& rf, const MpcParams& mu, const VecXc& y,
                          const NoiseCovariance* cov) {
  MatXc B = mpc_matrix(rf, mu);
  if (cov) {
    MatXc Z(B.rows(), 4);
    for (int p = 0; p < 4; ++p) Z.col(p) = cov->solve(B.col(p));
    Eigen::Matrix4cd G = B.adjoint() * Z;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> eig(G);
    const auto& ev = eig.eigenvalues();
    if (!(ev(3) > 0.0) || ev(0) <= 1e-20 * ev(3)) return 0.0;
    Eigen::Vector4cd rhs = Z.adjoint() * y;
    Eigen::Vector4cd gamma = eig.eigenvectors() *
                             (ev.cwiseInverse().asDiagonal() *
                              (eig.eigenvectors().adjoint() * rhs));
    return std::real(rhs.dot(gamma));
  }
  Eigen::JacobiSVD<MatXc> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  if (s.size() < 4 || s(3) <= 1e-10 * s(0)) return 0.0;
  VecXc gamma = svd.solve(y);
  return (B * gamma).squaredNorm();
}

// Golden-section polish of the distance against the concentrated fit power,
// within one interpolated delay-grid step of the seed (where the envelope
// statistic is unimodal).  The grid quantizes distance far coarser than a
// carrier period, and later phase-sensitive refinement can only move the
// estimate by a fraction of a wavelength, so the absolute distance must be
// pinned down here on the envelope before any phase-locked stage runs.
double polish_distance(const RfConfig& rf, MpcParams mu, const VecXc& y, double halfwidth,
                       const NoiseCovariance* cov) {
  // stay clear of the first and last resolution cell (they alias zero delay)
  const double lo_bound = rf.delay_window_m() / rf.nf;
  const double hi_bound = rf.delay_window_m() * (1.0 - 1.0 / rf.nf);
  double a = std::max(mu.d - halfwidth, lo_bound);
  double b = std::min(mu.d + halfwidth, hi_bound);
  if (!(b > a)) return mu.d;
  auto eval = [&](double d) {
    MpcParams m = mu;
    m.d = d;
    return concentrated_power(rf, m, y, cov);
  };
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
  double f1 = eval(c1), f2 = eval(c2);
  while (b - a > 1e-4) {
    if (f1 >= f2) {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - gr * (b - a);
      f1 = eval(c1);
    } else {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + gr * (b - a);
      f2 = eval(c2);
    }
  }
  return 0.5 * (a + b);
}

void check_basis_rank(const Eigen::JacobiSVD<MatXc>& svd) {
  const auto& s = svd.singularValues();
  if (s.size() < 4 || s(3) <= 1e-10 * s(0))
    throw std::runtime_error(
        "polarimetric basis is rank-deficient: degenerate array/polarization configuration");
}

}  // namespace

PolWeights weights_ls(const MatXc& B, const VecXc& y, Eigen::Matrix4cd* cov_unscaled) {
  if (B.cols() != 4 || B.rows() != y.size()) throw std::invalid_argument("weights_ls: shape");
  Eigen::JacobiSVD<MatXc> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
  check_basis_rank(svd);
  PolWeights gamma = svd.solve(y);
  if (cov_unscaled) {
    Eigen::Vector4d inv2 = svd.singularValues().array().square().inverse();
    *cov_unscaled = svd.matrixV() * inv2.asDiagonal() * svd.matrixV().adjoint();
  }
  return gamma;
}

PolWeights weights_wls(const MatXc& B, const VecXc& y, const NoiseCovariance& R,
                       Eigen::Matrix4cd* cov) {
  if (B.cols() != 4 || B.rows() != y.size()) throw std::invalid_argument("weights_wls: shape");
  MatXc Z(B.rows(), 4);
  for (int p = 0; p < 4; ++p) Z.col(p) = R.solve(B.col(p));
  Eigen::Matrix4cd G = B.adjoint() * Z;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> eig(G);
  const auto& ev = eig.eigenvalues();
  if (ev(0) <= 1e-20 * ev(3) || ev(3) <= 0.0)
    throw std::runtime_error(
        "polarimetric basis is rank-deficient: degenerate array/polarization configuration");
  Eigen::Vector4cd rhs = Z.adjoint() * y;
  Eigen::Matrix4cd Ginv = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() *
                          eig.eigenvectors().adjoint();
  if (cov) *cov = Ginv;
  return Ginv * rhs;
}

std::vector<Detection> detect_mpcs(const RfConfig& rf, const InterpGrids& g, const VecXc& y,
                                   int k_budget, double beta_max, const NoiseCovariance* cov,
                                   double total_energy, double beta_offset) {
  if (k_budget < 0) throw std::invalid_argument("detect_mpcs: negative budget");
  std::vector<Detection> dets;
  double total = total_energy > 0.0 ? total_energy : y.squaredNorm();
  if (total <= 0.0) return dets;

  VecXc r = y;
  double beta = beta_offset;
  // Imperfect cancellation of a strong component leaves sidelobe energy that
  // re-peaks between half and one resolution cell away in distance; such a
  // re-detection is cancelled from the residual but not emitted as a
  // component of its own.
  const double merge_radius = 0.75 * rf.delay_window_m() / rf.nf;
  for (int k = 0; k < k_budget; ++k) {
    if (beta >= beta_max) break;
    PeakResult pk = peak_search(rf, g, r);
    if (pk.stat <= 0.0) break;
    pk.mu.d = polish_distance(rf, pk.mu, r, rf.delay_window_m() / g.nf_prime, cov);
    bool merged = false;
    for (const Detection& prev : dets)
      if (std::abs(prev.mu.d - pk.mu.d) < merge_radius) {
        merged = true;
        break;
      }
    MatXc B = mpc_matrix(rf, pk.mu);
    Detection det;
    det.mu = pk.mu;
    Eigen::Matrix4cd C;
    if (cov) {
      det.gamma = weights_wls(B, r, *cov, &C);
    } else {
      det.gamma = weights_ls(B, r, &C);
    }
    det.wvar = C.diagonal().real();
    VecXc s = B * det.gamma;
    det.energy = s.squaredNorm();
    if (det.energy <= 0.0) break;
    beta += det.energy / total;
    det.beta_cum = beta;
    r -= s;
    if (!merged) dets.push_back(std::move(det));
  }
  return dets;
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
  return 0.5 * (hi + v[mid - 1]);
}

}  // namespace

DmcParams estimate_dmc(const RfConfig& rf, const VecXc& residual) {
  if (residual.size() != rf.dim()) throw std::invalid_argument("estimate_dmc: size mismatch");
  const int nf = rf.nf;
  const int nrx = rf.nrx();

  // averaged delay power profile; IDFT normalized so a DMC process with
  // profile psi gives E p(q) = psi(q) + sigma_w^2 / nf
  VecX p = VecX::Zero(nf);
  for (int a = 0; a < nrx; ++a) {
    for (int q = 0; q < nf; ++q) {
      cd acc = 0.0;
      for (int i = 0; i < nf; ++i)
        acc += residual(a * nf + i) * std::polar(1.0, 2.0 * kPi * i * q / nf);
      p(q) += std::norm(acc / static_cast<double>(nf));
    }
  }
  p /= nrx;

  DmcParams est;
  double total = p.sum();
  if (total <= 0.0) {
    est.sigma_w = 1e-12;
    return est;
  }

  int q_on = 0;
  p.maxCoeff(&q_on);

  // white floor per delay bin from the pre-onset median (exponential median
  // correction ln 2); without usable pre-onset bins fall back to the lower
  // quartile of all bins (exponential 25% point at -ln 0.75)
  double floor_bin;
  if (q_on >= 3) {
    std::vector<double> pre(p.data(), p.data() + q_on);
    floor_bin = median_of(pre) / std::log(2.0);
  } else {
    std::vector<double> all(p.data(), p.data() + nf);
    std::size_t k = all.size() / 4;
    std::nth_element(all.begin(), all.begin() + k, all.end());
    floor_bin = all[k] / (-std::log(0.75));
  }
  est.sigma_w = std::sqrt(std::max(floor_bin * nf, 1e-24));

  // decaying tail: bins after onset that stand clear of the floor
  std::vector<double> xs, ys;
  for (int q = q_on; q < nf; ++q) {
    double excess = p(q) - floor_bin;
    if (excess <= std::max(floor_bin, 1e-30)) break;
    xs.push_back(static_cast<double>(q - q_on));
    ys.push_back(std::log(excess));
  }
  if (xs.size() < 4) return est;  // white-only fallback

  double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i]; sy += ys[i]; sxx += xs[i] * xs[i]; sxy += xs[i] * ys[i];
  }
  double denom = n * sxx - sx * sx;
  if (denom <= 0.0) return est;
  double slope = (n * sxy - sx * sy) / denom;
  double intercept = (sy - slope * sx) / n;
  if (slope >= 0.0) return est;  // non-decaying tail: not our model

  est.beta = -slope;
  est.alpha = nf * std::exp(intercept);
  est.tau_on_s = q_on / rf.bw_hz;
  return est;
}

void gn_refine(const RfConfig& rf, std::vector<Detection>& dets, const VecXc& y,
               const NoiseCovariance& R, const GnOptions& opt) {
  const int K = static_cast<int>(dets.size());
  if (K == 0) return;
  const int N = rf.dim();
  const double lam_c = rf.lambda_c();
  const double d_max = rf.delay_window_m();

  // joint WLS weight solve at fixed structural parameters; returns whitened
  // residual cost, or nullopt if the joint basis is degenerate
  auto solve_weights = [&](const std::vector<MpcParams>& mus, std::vector<PolWeights>& gammas,
                           std::vector<MatXc>* Bs, VecXc* resid) -> std::optional<double> {
    MatXc Bj(N, 4 * K);
    for (int k = 0; k < K; ++k) {
      MatXc B = mpc_matrix(rf, mus[k]);
      if (Bs) (*Bs)[k] = B;
      Bj.middleCols(4 * k, 4) = B;
    }
    MatXc Z(N, 4 * K);
    for (int c = 0; c < 4 * K; ++c) Z.col(c) = R.solve(Bj.col(c));
    MatXc G = Bj.adjoint() * Z;
    double ridge = 1e-12 * G.diagonal().real().maxCoeff();
    G += ridge * MatXc::Identity(4 * K, 4 * K);
    Eigen::LDLT<MatXc> ldlt(G);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    VecXc gam = ldlt.solve(Z.adjoint() * y);
    for (int k = 0; k < K; ++k) gammas[k] = gam.segment(4 * k, 4);
    VecXc res = y - Bj * gam;
    if (resid) *resid = res;
    return std::real(res.dot(R.solve(res)));
  };

  std::vector<MpcParams> mus(K);
  std::vector<PolWeights> gammas(K);
  for (int k = 0; k < K; ++k) mus[k] = dets[k].mu;

  std::vector<MatXc> Bs(K);
  VecXc resid(N);
  auto cost0 = solve_weights(mus, gammas, &Bs, &resid);
  if (!cost0) return;
  double cost = *cost0;

  double lambda = opt.lambda_init;
  for (int it = 0; it < opt.max_iters; ++it) {
    // structural Jacobian at the current iterate
    MatXc J(N, 3 * K);
    for (int k = 0; k < K; ++k) {
      MatXc B, dBd, dBa, dBe;
      mpc_matrix_derivs(rf, mus[k], B, dBd, dBa, dBe);
      J.col(3 * k + 0) = dBd * gammas[k];
      J.col(3 * k + 1) = dBa * gammas[k];
      J.col(3 * k + 2) = dBe * gammas[k];
    }
    MatXc Zj(N, 3 * K);
    for (int c = 0; c < 3 * K; ++c) Zj.col(c) = R.solve(J.col(c));
    MatX D = 2.0 * (J.adjoint() * Zj).real();
    VecX q = 2.0 * (Zj.adjoint() * resid).real();

    bool accepted = false;
    while (lambda <= opt.lambda_max) {
      MatX Dd = D;
      for (int i = 0; i < 3 * K; ++i) Dd(i, i) += lambda * std::max(D(i, i), 1e-12);
      VecX step = Dd.ldlt().solve(q);

      std::vector<MpcParams> trial = mus;
      for (int k = 0; k < K; ++k) {
        trial[k].d = std::clamp(trial[k].d + step(3 * k + 0), 1e-6, d_max - 1e-9);
        trial[k].az += step(3 * k + 1);
        trial[k].el += step(3 * k + 2);
        wrap_direction(trial[k].az, trial[k].el);
      }
      std::vector<PolWeights> trial_g(K);
      std::vector<MatXc> trial_B(K);
      VecXc trial_res(N);
      auto trial_cost = solve_weights(trial, trial_g, &trial_B, &trial_res);
      if (trial_cost && *trial_cost <= cost) {
        mus = std::move(trial);
        gammas = std::move(trial_g);
        Bs = std::move(trial_B);
        resid = std::move(trial_res);
        cost = *trial_cost;
        lambda = std::max(opt.lambda_min, lambda * opt.lambda_down);
        accepted = true;
        // convergence on the scaled step norm
        double s2 = 0.0;
        for (int k = 0; k < K; ++k) {
          double sd = step(3 * k) / lam_c;
          s2 += sd * sd + step(3 * k + 1) * step(3 * k + 1) + step(3 * k + 2) * step(3 * k + 2);
        }
        if (std::sqrt(s2) < opt.step_tol) it = opt.max_iters;  // converged
        break;
      }
      lambda *= opt.lambda_up;
    }
    if (!accepted) break;  // damping exhausted
  }

  // final per-component weights + covariances on the deflated residuals
  for (int k = 0; k < K; ++k) {
    dets[k].mu = mus[k];
    VecXc yk = resid + Bs[k] * gammas[k];
    Eigen::Matrix4cd C;
    dets[k].gamma = weights_wls(Bs[k], yk, R, &C);
    dets[k].wvar = C.diagonal().real();
    dets[k].energy = (Bs[k] * dets[k].gamma).squaredNorm();
  }
}

}  // namespace mpslam
