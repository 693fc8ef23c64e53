#include "mpslam/ekf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mpslam {

namespace {

// Rebuild x/P after the track list changed from old_K tracks to the current
// st.tracks, where keep[i] gives each new track's index in the old layout
// (-1 for freshly appended tracks, which get zeroed rows).
void remap_state(FilterState& st, const VecX& x_old, const MatX& P_old, int old_K,
                 const std::vector<int>& keep) {
  const int K = st.K();
  st.x = VecX::Zero(kSlots * K);
  st.P = MatX::Zero(kSlots * K, kSlots * K);
  for (int s = 0; s < kSlots; ++s) {
    for (int k = 0; k < K; ++k) {
      if (keep[k] < 0) continue;
      st.x(s * K + k) = x_old(s * old_K + keep[k]);
      for (int s2 = 0; s2 < kSlots; ++s2)
        for (int k2 = 0; k2 < K; ++k2) {
          if (keep[k2] < 0) continue;
          st.P(s * K + k, s2 * K + k2) = P_old(s * old_K + keep[k], s2 * old_K + keep[k2]);
        }
    }
  }
}

void wrap_track_angles(FilterState& st, const RfConfig& rf) {
  const double d_max = rf.delay_window_m();
  for (int k = 0; k < st.K(); ++k) {
    double az = st.x(st.idx(kSlotAz, k));
    double el = st.x(st.idx(kSlotEl, k));
    wrap_direction(az, el);
    st.x(st.idx(kSlotAz, k)) = az;
    st.x(st.idx(kSlotEl, k)) = el;
    double& d = st.x(st.idx(kSlotD, k));
    d = std::clamp(d, 1e-6, d_max - 1e-9);
    for (int p = 0; p < 4; ++p) {
      double& a = st.x(st.idx(kSlotA0 + p, k));
      if (a < 0.0) {  // keep magnitudes nonnegative; flip phase instead
        a = -a;
        st.x(st.idx(kSlotP0 + p, k)) += kPi;
      }
      st.x(st.idx(kSlotP0 + p, k)) = wrap_azimuth(st.x(st.idx(kSlotP0 + p, k)));
    }
  }
}

struct GridSteps {
  double d = 0.0, az = 0.0, el = 0.0;
  // Birth distance std: detections carry an envelope-polished distance, so the
  // seed uncertainty is capped at an eighth of a wavelength; anything looser
  // would let the first phase-dominated update walk the estimate to an
  // adjacent carrier cycle.
  double d_init_std = 0.0;
};

GridSteps grid_steps(const RfConfig& rf, const InterpGrids& grids) {
  auto span_step = [](const VecX& v) { return v.size() > 1 ? std::abs(v(1) - v(0)) : 0.0; };
  GridSteps s;
  s.d = rf.delay_window_m() / grids.nf_prime;
  s.az = span_step(grids.az);
  s.el = span_step(grids.el);
  s.d_init_std = std::min(s.d / std::sqrt(12.0), rf.lambda_c() / 8.0);
  return s;
}

// Candidate SINR from the WLS weights and their error covariance diagonal:
// total fitted power over total weight variance.  On pure noise the WLS fit
// makes this ratio mean one (0 dB), so a birth gate a few dB above zero keeps
// the false-birth rate in the low percent range.
double detection_snr(const Detection& det) {
  double num = 0.0, den = 0.0;
  for (int p = 0; p < 4; ++p) {
    num += std::norm(det.gamma(p));
    den += std::max(det.wvar(p), 1e-30);
  }
  return num / den;
}

// Append one detection as a new track with quantization-seeded structural
// covariance and WLS-seeded weight covariance.
void append_track(FilterState& st, const Detection& det, const GridSteps& steps,
                  const FilterConfig& cfg, int n, int* next_id) {
  const int K = st.K();
  VecX x_old = st.x;
  MatX P_old = st.P;
  std::vector<int> keep(K + 1);
  for (int k = 0; k < K; ++k) keep[k] = k;
  keep[K] = -1;
  Track t;
  t.id = (*next_id)++;
  t.birth_n = n;
  st.tracks.push_back(t);
  remap_state(st, x_old, P_old, K, keep);

  auto quant_var = [](double step) { return step > 0 ? (step * step) / 12.0 : 1e-6; };
  const int k = K;
  st.x(st.idx(kSlotD, k)) = det.mu.d;
  st.x(st.idx(kSlotAz, k)) = det.mu.az;
  st.x(st.idx(kSlotEl, k)) = det.mu.el;
  st.P(st.idx(kSlotD, k), st.idx(kSlotD, k)) =
      steps.d_init_std > 0 ? steps.d_init_std * steps.d_init_std : 1e-6;
  st.P(st.idx(kSlotAz, k), st.idx(kSlotAz, k)) = quant_var(steps.az);
  st.P(st.idx(kSlotEl, k), st.idx(kSlotEl, k)) = quant_var(steps.el);
  st.P(st.idx(kSlotVd, k), st.idx(kSlotVd, k)) = cfg.rate_std_d * cfg.rate_std_d;
  st.P(st.idx(kSlotVaz, k), st.idx(kSlotVaz, k)) = cfg.rate_std_ang * cfg.rate_std_ang;
  st.P(st.idx(kSlotVel, k), st.idx(kSlotVel, k)) = cfg.rate_std_ang * cfg.rate_std_ang;
  for (int p = 0; p < 4; ++p) {
    double a = std::abs(det.gamma(p));
    double v = std::max(det.wvar(p), 1e-30);
    st.x(st.idx(kSlotA0 + p, k)) = a;
    st.x(st.idx(kSlotP0 + p, k)) = std::arg(det.gamma(p));
    st.P(st.idx(kSlotA0 + p, k), st.idx(kSlotA0 + p, k)) = cfg.rho_birth * v / 2.0;
    double pv = cfg.rho_birth * v / (2.0 * std::max(a * a, 1e-30));
    st.P(st.idx(kSlotP0 + p, k), st.idx(kSlotP0 + p, k)) = std::min(pv, kPi * kPi / 3.0);
  }
}

}  // namespace

MatX make_transition(int K, double dt) {
  MatX F = MatX::Identity(kSlots * K, kSlots * K);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < K; ++k) F(c * K + k, (c + 3) * K + k) = dt;
  return F;
}

MatX make_process_noise(int K, double dt, const FilterConfig& cfg) {
  MatX Q = MatX::Zero(kSlots * K, kSlots * K);
  const double qs[3] = {cfg.q_d, cfg.q_az, cfg.q_el};
  double t2 = dt * dt, t3 = t2 * dt, t4 = t3 * dt;
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < K; ++k) {
      int ip = c * K + k, iv = (c + 3) * K + k;
      Q(ip, ip) = qs[c] * t4 / 4.0;
      Q(ip, iv) = Q(iv, ip) = qs[c] * t3 / 2.0;
      Q(iv, iv) = qs[c] * t2;
    }
  }
  for (int p = 0; p < 4; ++p) {
    for (int k = 0; k < K; ++k) {
      Q((kSlotA0 + p) * K + k, (kSlotA0 + p) * K + k) = cfg.q_alpha;
      Q((kSlotP0 + p) * K + k, (kSlotP0 + p) * K + k) = cfg.q_phi;
    }
  }
  return Q;
}

void ekf_predict(FilterState& st, double dt, const FilterConfig& cfg) {
  const int K = st.K();
  if (K == 0) return;
  MatX F = make_transition(K, dt);
  st.x = F * st.x;
  st.P = F * st.P * F.transpose() + make_process_noise(K, dt, cfg);
  st.P = 0.5 * (st.P + st.P.transpose()).eval();
}

VecXc ekf_signal(const RfConfig& rf, const FilterState& st) {
  VecXc s = VecXc::Zero(rf.dim());
  for (int k = 0; k < st.K(); ++k) s += mpc_signal(rf, st.mu(k), st.gamma(k));
  return s;
}

MatXc ekf_jacobian(const RfConfig& rf, const FilterState& st) {
  const int K = st.K();
  MatXc J = MatXc::Zero(rf.dim(), kSlots * K);
  for (int k = 0; k < K; ++k) {
    MatXc B, dBd, dBa, dBe;
    mpc_matrix_derivs(rf, st.mu(k), B, dBd, dBa, dBe);
    PolWeights g = st.gamma(k);
    J.col(st.idx(kSlotD, k)) = dBd * g;
    J.col(st.idx(kSlotAz, k)) = dBa * g;
    J.col(st.idx(kSlotEl, k)) = dBe * g;
    for (int p = 0; p < 4; ++p) {
      cd phase = std::polar(1.0, st.x(st.idx(kSlotP0 + p, k)));
      J.col(st.idx(kSlotA0 + p, k)) = phase * B.col(p);
      J.col(st.idx(kSlotP0 + p, k)) = cd(0.0, 1.0) * g(p) * B.col(p);
    }
  }
  return J;
}

void ekf_update(FilterState& st, const RfConfig& rf, const VecXc& y, const NoiseCovariance& R) {
  const int K = st.K();
  if (K == 0) return;
  if (y.size() != rf.dim()) throw std::invalid_argument("ekf_update: size mismatch");

  VecXc nu = y - ekf_signal(rf, st);
  if (!nu.allFinite()) throw std::runtime_error("ekf_update: non-finite innovation");

  MatXc J = ekf_jacobian(rf, st);
  const int M = kSlots * K;
  MatXc Z(rf.dim(), M);
  for (int c = 0; c < M; ++c) Z.col(c) = R.solve(J.col(c));
  VecX q = 2.0 * (Z.adjoint() * nu).real();
  MatX D = 2.0 * (J.adjoint() * Z).real();

  MatX IPD = MatX::Identity(M, M) + st.P * D;
  Eigen::PartialPivLU<MatX> lu(IPD);
  MatX Pn = lu.solve(st.P);
  st.P = 0.5 * (Pn + Pn.transpose()).eval();
  st.x += st.P * q;
  if (!st.x.allFinite()) throw std::runtime_error("ekf_update: non-finite state");
  wrap_track_angles(st, rf);
}

double track_sinr_db(const FilterState& st, int k) {
  // Total weight power over total weight variance; a track fitting nothing
  // but noise sits at 0 dB on average and crosses the death threshold within
  // a few weight reinitializations.
  double num = 0.0, den = 0.0;
  for (int p = 0; p < 4; ++p) {
    double a = st.x(st.idx(kSlotA0 + p, k));
    double v = std::max(st.P(st.idx(kSlotA0 + p, k), st.idx(kSlotA0 + p, k)), 1e-30);
    num += a * a;
    den += v;
  }
  double db = 10.0 * std::log10(std::max(num / den, 1e-300));
  return std::clamp(db, -300.0, 300.0);
}

std::vector<DeathRecord> ekf_prune(FilterState& st, double eps_death_db, int n) {
  const int K = st.K();
  std::vector<DeathRecord> dead;
  std::vector<int> keep;
  std::vector<Track> kept;
  for (int k = 0; k < K; ++k) {
    double s = track_sinr_db(st, k);
    st.tracks[k].sinr_db = s;
    if (s < eps_death_db) {
      dead.push_back({st.tracks[k], n});
    } else {
      keep.push_back(k);
      kept.push_back(st.tracks[k]);
    }
  }
  if (dead.empty()) return dead;
  VecX x_old = st.x;
  MatX P_old = st.P;
  st.tracks = std::move(kept);
  remap_state(st, x_old, P_old, K, keep);
  return dead;
}

int ekf_birth(FilterState& st, const RfConfig& rf, const InterpGrids& grids, const VecXc& y,
              const NoiseCovariance& R, const FilterConfig& cfg, int n, int* next_id) {
  const int budget = cfg.k_max - st.K();
  if (budget <= 0) return 0;

  double total = y.squaredNorm();
  if (total <= 0.0) return 0;
  double offset = 0.0;
  for (int k = 0; k < st.K(); ++k)
    offset += mpc_signal(rf, st.mu(k), st.gamma(k)).squaredNorm() / total;
  VecXc residual = y - ekf_signal(rf, st);

  std::vector<Detection> dets =
      detect_mpcs(rf, grids, residual, budget, cfg.beta_max, &R, total, offset);

  GridSteps steps = grid_steps(rf, grids);
  const double gate = std::pow(10.0, cfg.eps_birth_db / 10.0);
  int born = 0;
  for (const Detection& det : dets) {
    if (!(detection_snr(det) >= gate)) continue;
    // Suppress candidates near a live track's distance: residual energy a
    // tracked component leaves behind (cancellation sidelobes peak within a
    // resolution cell) must not respawn as a duplicate.  Distance alone
    // decides — a mirror beam lobe of the same path differs in azimuth but
    // is still the same component.
    const double merge_radius = 0.75 * rf.delay_window_m() / rf.nf;
    bool duplicate = false;
    for (int k = 0; k < st.K() && !duplicate; ++k)
      duplicate = std::abs(det.mu.d - st.mu(k).d) < merge_radius;
    if (duplicate) continue;
    append_track(st, det, steps, cfg, n, next_id);
    ++born;
  }
  return born;
}

void ekf_reinit_weights(FilterState& st, const RfConfig& rf, const VecXc& y,
                        const NoiseCovariance& R) {
  const double lam = rf.lambda_c();
  for (int k = 0; k < st.K(); ++k) {
    if (st.tracks[k].odo_m < lam) continue;
    // component-specific measurement: y minus everything else
    VecXc yk = y;
    for (int j = 0; j < st.K(); ++j)
      if (j != k) yk -= mpc_signal(rf, st.mu(j), st.gamma(j));
    MatXc B = mpc_matrix(rf, st.mu(k));
    Eigen::Matrix4cd C;
    PolWeights g;
    try {
      g = weights_wls(B, yk, R, &C);
    } catch (const std::runtime_error&) {
      continue;  // degenerate basis: keep filtered weights
    }
    const int M = st.dim();
    for (int p = 0; p < 4; ++p) {
      int ia = st.idx(kSlotA0 + p, k), ip = st.idx(kSlotP0 + p, k);
      double a = std::abs(g(p));
      double v = std::max(std::real(C(p, p)), 1e-30);
      st.x(ia) = a;
      st.x(ip) = std::arg(g(p));
      for (int c = 0; c < M; ++c) {
        st.P(ia, c) = st.P(c, ia) = 0.0;
        st.P(ip, c) = st.P(c, ip) = 0.0;
      }
      st.P(ia, ia) = v / 2.0;
      st.P(ip, ip) = std::min(v / (2.0 * std::max(a * a, 1e-30)), kPi * kPi / 3.0);
    }
    st.tracks[k].odo_m = 0.0;
  }
}

FilterRun run_filter(const SnapshotSeries& series, const FilterConfig& cfg) {
  if (series.size() == 0) throw std::invalid_argument("run_filter: empty series");
  const RfConfig& rf = series.rf;
  rf.validate();
  const double dt = series.dt_s;
  InterpGrids grids = make_grids(rf, cfg.grids);
  GridSteps steps = grid_steps(rf, grids);

  FilterRun out;
  out.dmc.reserve(series.size());
  FilterState st;
  st.x = VecX::Zero(0);
  st.P = MatX::Zero(0, 0);
  int next_id = 0;

  auto emit_rows = [&](int n) {
    for (int k = 0; k < st.K(); ++k) {
      double s = track_sinr_db(st, k);
      st.tracks[k].sinr_db = s;
      st.tracks[k].sinr_sum_db += s;
      st.tracks[k].sinr_count += 1;
      MpcParams mu = st.mu(k);
      out.rows.push_back({n, st.tracks[k].id, mu.d, mu.az, mu.el, s});
    }
  };
  auto archive_death = [&](const DeathRecord& d) {
    TrackRecord r;
    r.id = d.track.id;
    r.birth_n = d.track.birth_n;
    r.death_n = d.death_n;
    r.mean_sinr_db = d.track.sinr_count > 0 ? d.track.sinr_sum_db / d.track.sinr_count : 0.0;
    out.tracks.push_back(r);
  };

  // ---- first snapshot: joint detection, DMC estimation, refinement ----
  const VecXc& y0 = series.y[0];
  std::vector<Detection> dets = detect_mpcs(rf, grids, y0, cfg.k_max, cfg.beta_max, nullptr);
  VecXc resid = y0;
  for (const Detection& d : dets) resid -= mpc_signal(rf, d.mu, d.gamma);
  DmcParams dmc0 = estimate_dmc(rf, resid);
  {
    // whitened re-estimation of the weights, then joint structural refinement
    NoiseCovariance R(rf, dmc0);
    for (Detection& d : dets) {
      MatXc B = mpc_matrix(rf, d.mu);
      VecXc yk = resid + B * d.gamma;
      Eigen::Matrix4cd C;
      d.gamma = weights_wls(B, yk, R, &C);
      d.wvar = C.diagonal().real();
      resid = yk - B * d.gamma;
    }
    gn_refine(rf, dets, y0, R, {});
  }
  // Joint refinement can walk two components onto a common distance; keep
  // the stronger (earlier) one.
  {
    const double merge_radius = 0.75 * rf.delay_window_m() / rf.nf;
    std::vector<Detection> kept;
    for (Detection& d : dets) {
      bool dup = false;
      for (const Detection& p : kept)
        if (std::abs(p.mu.d - d.mu.d) < merge_radius) {
          dup = true;
          break;
        }
      if (!dup) kept.push_back(std::move(d));
    }
    dets = std::move(kept);
  }

  // Two honest-noise gate passes: re-fit the weights under the current floor
  // estimate, gate, then re-estimate the floor from the survivors only.  The
  // first pass still carries rejected candidates' energy in its floor; the
  // second no longer does.
  const double gate = std::pow(10.0, cfg.eps_birth_db / 10.0);
  DmcParams dmc_fin = estimate_dmc(rf, [&] {
    VecXc r2 = y0;
    for (const Detection& d : dets) r2 -= mpc_signal(rf, d.mu, d.gamma);
    return r2;
  }());
  for (int pass = 0; pass < 2; ++pass) {
    NoiseCovariance Rf(rf, dmc_fin);
    VecXc racc = y0;
    for (const Detection& d : dets) racc -= mpc_signal(rf, d.mu, d.gamma);
    for (Detection& d : dets) {
      MatXc B = mpc_matrix(rf, d.mu);
      VecXc yk = racc + B * d.gamma;
      Eigen::Matrix4cd C;
      d.gamma = weights_wls(B, yk, Rf, &C);
      d.wvar = C.diagonal().real();
      racc = yk - B * d.gamma;
    }
    std::vector<Detection> survivors;
    for (Detection& d : dets)
      if (detection_snr(d) >= gate) survivors.push_back(std::move(d));
    dets = std::move(survivors);
    VecXc r2 = y0;
    for (const Detection& d : dets) r2 -= mpc_signal(rf, d.mu, d.gamma);
    dmc_fin = estimate_dmc(rf, r2);
  }
  out.dmc.push_back(dmc_fin);

  for (const Detection& det : dets) {
    if (st.K() >= cfg.k_max) break;
    append_track(st, det, steps, cfg, 0, &next_id);
  }
  emit_rows(0);

  // ---- remaining snapshots ----
  for (int n = 1; n < series.size(); ++n) {
    const VecXc& y = series.y[n];
    ekf_predict(st, dt, cfg);

    // Noise statistics from the PREDICTION residual: tracked components are
    // removed at their predicted (not yet re-fitted) values, so a component
    // that only chases per-snapshot noise leaves its energy in the residual
    // and the dense-multipath estimate stays honest.  Fitting the covariance
    // to the post-update residual instead would let spurious tracks absorb
    // noise energy, shrink the estimated floor, and inflate every SINR.
    VecXc resid_pred = y - ekf_signal(rf, st);
    DmcParams dmc_n = estimate_dmc(rf, resid_pred);
    out.dmc.push_back(dmc_n);
    NoiseCovariance R_n(rf, dmc_n);

    ekf_update(st, rf, y, R_n);
    // odometers advance with the post-update radial rates
    for (int k = 0; k < st.K(); ++k)
      st.tracks[k].odo_m += std::abs(st.x(st.idx(kSlotVd, k))) * dt;

    if ((n - 1) % std::max(cfg.birth_stride, 1) == 0)
      ekf_birth(st, rf, grids, y, R_n, cfg, n, &next_id);
    for (const DeathRecord& d : ekf_prune(st, cfg.eps_death_db, n)) archive_death(d);
    ekf_reinit_weights(st, rf, y, R_n);
    emit_rows(n);
  }

  // survivors into the archive
  for (const Track& t : st.tracks) {
    TrackRecord r;
    r.id = t.id;
    r.birth_n = t.birth_n;
    r.death_n = -1;
    r.mean_sinr_db = t.sinr_count > 0 ? t.sinr_sum_db / t.sinr_count : 0.0;
    out.tracks.push_back(r);
  }
  std::sort(out.tracks.begin(), out.tracks.end(),
            [](const TrackRecord& a, const TrackRecord& b) { return a.id < b.id; });
  return out;
}

}  // namespace mpslam
