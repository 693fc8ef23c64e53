#include "mpslam/slam.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mpslam/parallel.hpp"

namespace mpslam {

namespace {

double sq(double v) { return v * v; }

// Observation triple used by the damped adjustment: (track, snapshot, dist).
using ObsList = std::vector<std::tuple<int, int, double>>;

std::vector<std::pair<int, int>> consensus_pairs(const std::map<int, std::map<int, double>>& table,
                                                 const std::map<int, Vec3>& agents,
                                                 const std::map<int, Vec3>& feats, double thr) {
  std::vector<std::pair<int, int>> out;
  for (const auto& [k, byn] : table) {
    auto f = feats.find(k);
    if (f == feats.end()) continue;
    for (const auto& [n, d] : byn) {
      auto a = agents.find(n);
      if (a == agents.end()) continue;
      if (std::abs((a->second - f->second).norm() - d) <= thr) out.push_back({k, n});
    }
  }
  return out;
}

// Truncated squared-residual consensus cost (each outlier or unplaced pair
// costs thr^2): with a loose threshold the plain inlier count saturates and
// cannot distinguish the true embedding from a near-isometric flex of it,
// while this cost still prefers the tight fit.
double truncated_cost(const std::map<int, std::map<int, double>>& table,
                      const std::map<int, Vec3>& agents, const std::map<int, Vec3>& feats,
                      double thr) {
  const double t2 = sq(thr);
  double c = 0.0;
  for (const auto& [k, byn] : table) {
    auto f = feats.find(k);
    for (const auto& [n, d] : byn) {
      auto a = f == feats.end() ? agents.end() : agents.find(n);
      if (f == feats.end() || a == agents.end()) {
        c += t2;
        continue;
      }
      c += std::min(sq((a->second - f->second).norm() - d), t2);
    }
  }
  return c;
}

// Damped Gauss-Newton over agent (x, y) and feature (x, y, z) coordinates
// with the agent block eliminated (Schur complement); the reduced system is
// dense over the (few) features. Gauge: pin_xy_agent contributes no agent
// unknowns, pin_y_agent only x. Returns the final residual-squared sum.
double bundle_adjust(std::map<int, Vec3>& agents, std::map<int, Vec3>& feats, const ObsList& obs,
                     int pin_xy_agent, int pin_y_agent, int max_iters = 60) {
  std::vector<int> a_ids, f_ids;
  std::map<int, int> a_idx, f_idx;
  for (const auto& [n, p] : agents) {
    a_idx[n] = (int)a_ids.size();
    a_ids.push_back(n);
  }
  for (const auto& [k, p] : feats) {
    f_idx[k] = (int)f_ids.size();
    f_ids.push_back(k);
  }
  const int A = (int)a_ids.size(), F = (int)f_ids.size();
  if (A == 0 || F == 0 || obs.empty()) return 0.0;
  std::vector<Vec3> pa(A), fa(F);
  for (int i = 0; i < A; ++i) pa[i] = agents[a_ids[i]];
  for (int i = 0; i < F; ++i) fa[i] = feats[f_ids[i]];
  struct Ob {
    int fi;
    double d;
  };
  std::vector<std::vector<Ob>> by_agent(A);
  for (const auto& [k, n, d] : obs) {
    auto ia = a_idx.find(n);
    auto jf = f_idx.find(k);
    if (ia == a_idx.end() || jf == f_idx.end()) continue;
    by_agent[ia->second].push_back({jf->second, d});
  }
  auto cost = [&](const std::vector<Vec3>& P, const std::vector<Vec3>& Fv) {
    double c = 0.0;
    for (int ai = 0; ai < A; ++ai)
      for (const Ob& o : by_agent[ai]) c += sq((P[ai] - Fv[o.fi]).norm() - o.d);
    return c;
  };
  double lambda = 1e-4;
  double c0 = cost(pa, fa);
  for (int it = 0; it < max_iters; ++it) {
    MatX S = MatX::Zero(3 * F, 3 * F);
    VecX bf = VecX::Zero(3 * F);
    struct ASys {
      Eigen::Matrix2d App = Eigen::Matrix2d::Zero();
      Eigen::Vector2d bp = Eigen::Vector2d::Zero();
      std::vector<std::pair<int, Eigen::Matrix<double, 2, 3>>> apf;
      Eigen::Matrix2d Ai = Eigen::Matrix2d::Identity();
    };
    std::vector<ASys> asys(A);
    for (int ai = 0; ai < A; ++ai) {
      ASys& s = asys[ai];
      const bool free_x = a_ids[ai] != pin_xy_agent;
      const bool free_y = a_ids[ai] != pin_xy_agent && a_ids[ai] != pin_y_agent;
      for (const Ob& o : by_agent[ai]) {
        const Vec3 dv = pa[ai] - fa[o.fi];
        const double rho = std::max(dv.norm(), 1e-12);
        const double r = rho - o.d;
        const Vec3 g = dv / rho;
        const Eigen::Vector2d gp(free_x ? g.x() : 0.0, free_y ? g.y() : 0.0);
        const Vec3 ga = -g;
        s.App += gp * gp.transpose();
        s.bp -= gp * r;
        S.block<3, 3>(3 * o.fi, 3 * o.fi) += ga * ga.transpose();
        bf.segment<3>(3 * o.fi) -= ga * r;
        s.apf.push_back({o.fi, gp * ga.transpose()});
      }
    }
    MatX Sd = S;
    for (int k2 = 0; k2 < 3 * F; ++k2) Sd(k2, k2) += lambda * S(k2, k2) + 1e-10;
    VecX brf = bf;
    for (int ai = 0; ai < A; ++ai) {
      ASys& s = asys[ai];
      Eigen::Matrix2d Ad = s.App;
      for (int k2 = 0; k2 < 2; ++k2) Ad(k2, k2) += lambda * s.App(k2, k2) + 1e-10;
      s.Ai = Ad.inverse();
      for (const auto& [fi, apf_i] : s.apf) {
        brf.segment<3>(3 * fi) -= apf_i.transpose() * (s.Ai * s.bp);
        for (const auto& [fj, apf_j] : s.apf)
          Sd.block<3, 3>(3 * fi, 3 * fj) -= apf_i.transpose() * s.Ai * apf_j;
      }
    }
    const VecX da = Sd.ldlt().solve(brf);
    if (!da.allFinite()) {
      lambda = std::min(lambda * 10.0, 1e8);
      continue;
    }
    std::vector<Vec3> pt = pa, ft = fa;
    double step_inf = 0.0;
    for (int fi = 0; fi < F; ++fi) {
      const Vec3 d3 = da.segment<3>(3 * fi);
      ft[fi] += d3;
      step_inf = std::max(step_inf, d3.lpNorm<Eigen::Infinity>());
    }
    for (int ai = 0; ai < A; ++ai) {
      ASys& s = asys[ai];
      Eigen::Vector2d rhs = s.bp;
      for (const auto& [fi, apf_i] : s.apf) rhs -= apf_i * da.segment<3>(3 * fi);
      const Eigen::Vector2d dp = s.Ai * rhs;
      pt[ai] += Vec3(dp.x(), dp.y(), 0.0);
      step_inf = std::max(step_inf, dp.lpNorm<Eigen::Infinity>());
    }
    const double c1 = cost(pt, ft);
    if (c1 <= c0) {
      pa = std::move(pt);
      fa = std::move(ft);
      c0 = c1;
      lambda = std::max(lambda * 0.3, 1e-10);
      if (step_inf < 1e-9) break;
    } else {
      lambda = std::min(lambda * 10.0, 1e8);
      if (lambda >= 1e8) break;
    }
  }
  for (int i = 0; i < A; ++i) agents[a_ids[i]] = pa[i];
  for (int i = 0; i < F; ++i) feats[f_ids[i]] = fa[i];
  return c0;
}

// Drop agents/features with fewer than 3 supporting observations (repeat to
// a fixed point) and filter obs accordingly.
void prune_underconstrained(std::map<int, Vec3>& agents, std::map<int, Vec3>& feats,
                            ObsList& obs) {
  bool changed = true;
  while (changed) {
    changed = false;
    std::map<int, int> a_cnt, f_cnt;
    for (const auto& [k, n, d] : obs) {
      ++f_cnt[k];
      ++a_cnt[n];
    }
    for (auto it = agents.begin(); it != agents.end();) {
      if (a_cnt[it->first] < 3) {
        it = agents.erase(it);
        changed = true;
      } else
        ++it;
    }
    for (auto it = feats.begin(); it != feats.end();) {
      if (f_cnt[it->first] < 3) {
        it = feats.erase(it);
        changed = true;
      } else
        ++it;
    }
    if (changed) {
      ObsList kept;
      for (const auto& o : obs)
        if (feats.count(std::get<0>(o)) && agents.count(std::get<1>(o))) kept.push_back(o);
      obs = std::move(kept);
    }
  }
}

// Planar refinement of one agent position against 3D feature anchors.
void refine_agent_planar(Eigen::Vector2d& p, const std::map<int, Vec3>& feats,
                         const std::vector<std::pair<int, double>>& entries,
                         const std::vector<int>& subset) {
  auto cost = [&](const Eigen::Vector2d& q) {
    double c = 0.0;
    for (int i : subset) {
      const Vec3 pos(q.x(), q.y(), 0.0);
      c += sq((pos - feats.at(entries[i].first)).norm() - entries[i].second);
    }
    return c;
  };
  double lambda = 1e-6, c0 = cost(p);
  for (int it = 0; it < 30; ++it) {
    Eigen::Matrix2d H = Eigen::Matrix2d::Zero();
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (int i : subset) {
      const Vec3 pos(p.x(), p.y(), 0.0);
      const Vec3 dv = pos - feats.at(entries[i].first);
      const double rho = std::max(dv.norm(), 1e-12);
      const Eigen::Vector2d j(dv.x() / rho, dv.y() / rho);
      const double r = rho - entries[i].second;
      H += j * j.transpose();
      g += j * r;
    }
    Eigen::Matrix2d Hd = H;
    for (int k = 0; k < 2; ++k) Hd(k, k) += lambda * H(k, k) + 1e-12;
    const Eigen::Vector2d step = Hd.ldlt().solve(-g);
    const Eigen::Vector2d trial = p + step;
    const double c1 = cost(trial);
    if (c1 <= c0) {
      p = trial;
      c0 = c1;
      lambda = std::max(lambda * 0.3, 1e-10);
      if (step.norm() < 1e-11) break;
    } else
      lambda = std::min(lambda * 10.0, 1e8);
  }
}

// Locate one planar agent from known features by consensus over range
// triples: closed-form trilateration per triple, min-|z| pick, in-plane
// projection, inlier count, then planar refinement on the inliers.
std::optional<Vec3> solve_agent(const std::map<int, Vec3>& feats,
                                const std::vector<std::pair<int, double>>& entries, double thr,
                                RngStream& rng) {
  const int m = (int)entries.size();
  if (m < 3) return std::nullopt;
  int best_cnt = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  Vec3 best = Vec3::Zero();
  auto consider = [&](int i0, int i1, int i2) {
    std::vector<Vec3> cands;
    try {
      cands = trilaterate({feats.at(entries[i0].first), feats.at(entries[i1].first),
                           feats.at(entries[i2].first)},
                          {entries[i0].second, entries[i1].second, entries[i2].second});
    } catch (const std::runtime_error&) {
      return;
    }
    std::sort(cands.begin(), cands.end(),
              [](const Vec3& a, const Vec3& b) { return std::abs(a.z()) < std::abs(b.z()); });
    for (Vec3 c : cands) {
      c.z() = 0.0;
      int cnt = 0;
      double cost = 0.0;
      for (const auto& [k, d] : entries) {
        const double r = (c - feats.at(k)).norm() - d;
        if (std::abs(r) <= thr) {
          ++cnt;
          cost += sq(r);
        } else
          cost += sq(thr);
      }
      if (cost < best_cost) {
        best_cost = cost;
        best_cnt = cnt;
        best = c;
      }
    }
  };
  if (m <= 7) {
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        for (int k = j + 1; k < m; ++k) consider(i, j, k);
  } else {
    for (int t = 0; t < 12; ++t) {
      int i0 = rng.uniform_int(0, m - 1), i1, i2;
      do i1 = rng.uniform_int(0, m - 1);
      while (i1 == i0);
      do i2 = rng.uniform_int(0, m - 1);
      while (i2 == i0 || i2 == i1);
      consider(i0, i1, i2);
    }
  }
  if (best_cnt < 3) return std::nullopt;
  std::vector<int> inl;
  for (int i = 0; i < m; ++i)
    if (std::abs((best - feats.at(entries[i].first)).norm() - entries[i].second) <= thr)
      inl.push_back(i);
  Eigen::Vector2d p(best.x(), best.y());
  refine_agent_planar(p, feats, entries, inl);
  return Vec3(p.x(), p.y(), 0.0);
}

// Grow a seed hypothesis over the window by alternating agent and feature
// solves; already-known positions are kept.
void extend_hypothesis(const std::map<int, std::map<int, double>>& win, std::map<int, Vec3>& agents,
                       std::map<int, Vec3>& feats, double thr, const SlamConfig& cfg,
                       RngStream& rng, bool light) {
  std::set<int> times;
  for (const auto& [k, byn] : win)
    for (const auto& [n, d] : byn) times.insert(n);
  const int rounds = light ? 1 : 2;
  for (int round = 0; round < rounds; ++round) {
    for (int n : times) {
      if (agents.count(n)) continue;
      std::vector<std::pair<int, double>> entries;
      for (const auto& [k, byn] : win) {
        if (!feats.count(k)) continue;
        auto it = byn.find(n);
        if (it != byn.end()) entries.push_back({k, it->second});
      }
      auto p = solve_agent(feats, entries, thr, rng);
      if (p) agents[n] = *p;
    }
    for (const auto& [k, byn] : win) {
      if (feats.count(k)) continue;
      std::vector<Vec3> apos;
      std::vector<double> dd;
      for (const auto& [n, d] : byn) {
        auto it = agents.find(n);
        if (it != agents.end()) {
          apos.push_back(it->second);
          dd.push_back(d);
        }
      }
      if ((int)apos.size() < 3) continue;
      auto fit = ransac_feature(apos, dd, cfg, rng, light ? 12 : 30);
      if (fit && (int)fit->inliers.size() >= 3) feats[k] = fit->pos;
    }
  }
}

struct MinimalRoot {
  std::array<Eigen::Vector2d, 3> p;  // agent positions, p[0] = origin
  std::array<Eigen::Vector2d, 3> a;  // feature positions
};

// Solve the planar 9-unknown range problem (3 agents x 3 features, gauge
// p0 = origin, p1 on +x, third agent y > 0) by multi-start damped
// Gauss-Newton; accepts only near-exact roots.
std::optional<MinimalRoot> solve_minimal_planar(const Eigen::Matrix3d& D, RngStream& rng,
                                                int starts) {
  const double dmax = D.maxCoeff();
  using V9 = Eigen::Matrix<double, 9, 1>;
  using M9 = Eigen::Matrix<double, 9, 9>;
  auto residual = [&](const V9& u, V9& r, M9* J) {
    const Eigen::Vector2d p[3] = {{0.0, 0.0}, {u(0), 0.0}, {u(1), u(2)}};
    const Eigen::Vector2d a[3] = {{u(3), u(4)}, {u(5), u(6)}, {u(7), u(8)}};
    if (J) J->setZero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int row = 3 * i + j;
        const Eigen::Vector2d dv = p[i] - a[j];
        const double rho = std::max(dv.norm(), 1e-12);
        r(row) = rho - D(i, j);
        if (J) {
          const Eigen::Vector2d g = dv / rho;
          if (i == 1) (*J)(row, 0) = g.x();
          if (i == 2) {
            (*J)(row, 1) = g.x();
            (*J)(row, 2) = g.y();
          }
          (*J)(row, 3 + 2 * j) = -g.x();
          (*J)(row, 4 + 2 * j) = -g.y();
        }
      }
  };
  // triangle-inequality bands for the agent spacing draws
  double lo2 = 0.0, hi2 = std::numeric_limits<double>::infinity();
  double lo3 = 0.0, hi3 = std::numeric_limits<double>::infinity();
  for (int j = 0; j < 3; ++j) {
    lo2 = std::max(lo2, std::abs(D(0, j) - D(1, j)));
    hi2 = std::min(hi2, D(0, j) + D(1, j));
    lo3 = std::max(lo3, std::abs(D(0, j) - D(2, j)));
    hi3 = std::min(hi3, D(0, j) + D(2, j));
  }
  if (hi2 < lo2) std::swap(hi2, lo2);
  if (hi3 < lo3) std::swap(hi3, lo3);
  for (int s = 0; s < starts; ++s) {
    V9 u;
    u(0) = lo2 + rng.uniform(0.05, 0.95) * (hi2 - lo2);
    const double rho3 = lo3 + rng.uniform(0.05, 0.95) * (hi3 - lo3);
    const double th3 = rng.uniform(0.0, kPi);
    u(1) = rho3 * std::cos(th3);
    u(2) = rho3 * std::sin(th3);
    for (int j = 0; j < 3; ++j) {
      const double phi = rng.uniform(-kPi, kPi);
      u(3 + 2 * j) = D(0, j) * std::cos(phi);
      u(4 + 2 * j) = D(0, j) * std::sin(phi);
    }
    double lambda = 1e-3;
    V9 r;
    residual(u, r, nullptr);
    double c0 = r.squaredNorm();
    for (int it = 0; it < 80 && c0 > 1e-22; ++it) {
      M9 J;
      residual(u, r, &J);
      c0 = r.squaredNorm();
      const M9 H = J.transpose() * J;
      const V9 g = J.transpose() * r;
      M9 Hd = H;
      for (int k = 0; k < 9; ++k) Hd(k, k) += lambda * H(k, k) + 1e-12;
      const V9 step = Hd.ldlt().solve(-g);
      V9 ut = u + step;
      V9 rt;
      residual(ut, rt, nullptr);
      const double c1 = rt.squaredNorm();
      if (c1 <= c0) {
        u = ut;
        c0 = c1;
        lambda = std::max(lambda * 0.3, 1e-10);
        if (step.lpNorm<Eigen::Infinity>() < 1e-12) break;
      } else
        lambda = std::min(lambda * 10.0, 1e8);
    }
    residual(u, r, nullptr);
    if (r.lpNorm<Eigen::Infinity>() >= 1e-6 * std::max(1.0, dmax)) continue;
    MinimalRoot root;
    root.p = {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(u(0), 0.0), Eigen::Vector2d(u(1), u(2))};
    root.a = {Eigen::Vector2d(u(3), u(4)), Eigen::Vector2d(u(5), u(6)),
              Eigen::Vector2d(u(7), u(8))};
    if (root.p[1].x() < 0.0) {  // rotate by pi so p1 lands on +x
      for (auto& q : root.p) q = -q;
      for (auto& q : root.a) q = -q;
    }
    if (root.p[2].y() < 0.0) {  // reflect so the third agent has y > 0
      for (auto& q : root.p) q.y() = -q.y();
      for (auto& q : root.a) q.y() = -q.y();
    }
    return root;
  }
  return std::nullopt;
}

}  // namespace

double inlier_threshold(const SlamConfig& cfg) { return 3.0 * cfg.sigma_inl; }

int ransac_iterations(const SlamConfig& cfg, int m) {
  const double w = std::clamp(1.0 - cfg.outlier_prior, 1e-6, 1.0);
  const double pg = std::pow(w, m);
  const double conf = std::clamp(cfg.confidence, 0.5, 1.0 - 1e-12);
  // closed-form 3-point hypotheses always solve; larger minimal samples go
  // through the iterative solver, whose finite success rate gets a 2x margin
  const int margin = m > 3 ? 2 : 1;
  int n;
  if (pg <= 1e-12)
    n = cfg.ransac_max_iters;
  else if (pg >= 1.0 - 1e-12)
    n = 1;
  else
    n = margin * (int)std::ceil(std::log(1.0 - conf) / std::log(1.0 - pg));
  return std::clamp(n, cfg.ransac_min_iters, cfg.ransac_max_iters);
}

std::vector<Vec3> trilaterate(const std::array<Vec3, 3>& anchors,
                              const std::array<double, 3>& ranges, double tol) {
  const Vec3 ex_raw = anchors[1] - anchors[0];
  const double d = ex_raw.norm();
  const double scale = std::max({1.0, ranges[0], ranges[1], ranges[2], d});
  if (d <= tol * scale) throw std::runtime_error("trilaterate: coincident anchors");
  const Vec3 ex = ex_raw / d;
  const Vec3 r3 = anchors[2] - anchors[0];
  const double i = ex.dot(r3);
  const Vec3 ey_raw = r3 - i * ex;
  const double jn = ey_raw.norm();
  if (jn <= tol * scale) throw std::runtime_error("trilaterate: collinear anchors");
  const Vec3 ey = ey_raw / jn;
  const Vec3 ez = ex.cross(ey);
  const double x = (sq(ranges[0]) - sq(ranges[1]) + sq(d)) / (2.0 * d);
  const double y = (sq(ranges[0]) - sq(ranges[2]) + sq(i) + sq(jn) - 2.0 * i * x) / (2.0 * jn);
  double z2 = sq(ranges[0]) - sq(x) - sq(y);
  if (z2 < -tol * sq(scale)) throw std::runtime_error("trilaterate: inconsistent ranges");
  z2 = std::max(z2, 0.0);
  const double z = std::sqrt(z2);
  const Vec3 base = anchors[0] + x * ex + y * ey;
  if (z <= tol * scale) return {base};
  return {base + z * ez, base - z * ez};
}

Vec3 trilaterate_ls(const std::vector<Vec3>& anchors, const std::vector<double>& ranges) {
  if (anchors.size() != ranges.size() || anchors.size() < 4)
    throw std::invalid_argument("trilaterate_ls: need at least 4 anchors");
  const int m = (int)anchors.size() - 1;
  MatX Alin(m, 3);
  VecX b(m);
  for (int i = 1; i <= m; ++i) {
    Alin.row(i - 1) = 2.0 * (anchors[i] - anchors[0]).transpose();
    b(i - 1) =
        sq(ranges[0]) - sq(ranges[i]) + anchors[i].squaredNorm() - anchors[0].squaredNorm();
  }
  Eigen::JacobiSVD<MatX> svd(Alin, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues()(2) <= 1e-10 * svd.singularValues()(0))
    throw std::runtime_error("trilaterate_ls: degenerate anchor geometry");
  Vec3 x = svd.solve(b);
  for (int it = 0; it < 20; ++it) {
    MatX J((int)anchors.size(), 3);
    VecX r((int)anchors.size());
    for (size_t i = 0; i < anchors.size(); ++i) {
      const Vec3 dv = x - anchors[i];
      const double rho = std::max(dv.norm(), 1e-12);
      J.row((int)i) = (dv / rho).transpose();
      r((int)i) = rho - ranges[i];
    }
    const Eigen::Matrix3d H =
        J.transpose() * J + 1e-12 * Eigen::Matrix3d::Identity();
    const Vec3 step = H.ldlt().solve(-J.transpose() * r);
    x += step;
    if (step.norm() < 1e-12) break;
  }
  return x;
}

double refine_feature(Vec3& pos, const std::vector<Vec3>& agent_pos,
                      const std::vector<double>& dist, const std::vector<int>& subset) {
  if (subset.size() >= 2) {
    Vec3 mean = Vec3::Zero();
    for (int i : subset) mean += agent_pos[i];
    mean /= (double)subset.size();
    MatX centered((int)subset.size(), 3);
    for (std::size_t r = 0; r < subset.size(); ++r)
      centered.row((int)r) = (agent_pos[subset[r]] - mean).transpose();
    Eigen::JacobiSVD<MatX> svd(centered);
    const VecX sv = svd.singularValues();
    if (sv(1) <= 1e-9 * std::max(sv(0), 1e-300))
      throw std::runtime_error("refine_feature: collinear supporting positions");
  }
  auto cost = [&](const Vec3& p) {
    double c = 0.0;
    for (int i : subset) c += sq((p - agent_pos[i]).norm() - dist[i]);
    return c;
  };
  double lambda = 1e-6, c0 = cost(pos);
  for (int it = 0; it < 50; ++it) {
    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    Vec3 g = Vec3::Zero();
    for (int i : subset) {
      const Vec3 dv = pos - agent_pos[i];
      const double rho = std::max(dv.norm(), 1e-12);
      const Vec3 j = dv / rho;
      const double r = rho - dist[i];
      H += j * j.transpose();
      g += j * r;
    }
    if ((2.0 * g).norm() < 1e-9) break;
    Eigen::Matrix3d Hd = H;
    for (int k = 0; k < 3; ++k) Hd(k, k) += lambda * H(k, k) + 1e-12;
    const Vec3 step = Hd.ldlt().solve(-g);
    const Vec3 trial = pos + step;
    const double c1 = cost(trial);
    if (c1 <= c0) {
      pos = trial;
      c0 = c1;
      lambda = std::max(lambda * 0.3, 1e-10);
      if (step.norm() < 1e-11) break;
    } else
      lambda = std::min(lambda * 10.0, 1e8);
  }
  return c0;
}

std::optional<FeatureFit> ransac_feature(const std::vector<Vec3>& agent_pos,
                                         const std::vector<double>& dist, const SlamConfig& cfg,
                                         RngStream& rng, int iters) {
  if (agent_pos.size() != dist.size())
    throw std::invalid_argument("ransac_feature: positions and distances differ in size");
  const int n = (int)dist.size();
  if (n < 3) throw std::invalid_argument("ransac_feature: need at least 3 observations");
  const double thr = inlier_threshold(cfg);
  const int total_iters = iters > 0 ? iters : ransac_iterations(cfg, 3);
  double agent_zmax = 0.0;
  for (const Vec3& p : agent_pos) agent_zmax = std::max(agent_zmax, std::abs(p.z()));
  int best_count = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  Vec3 best = Vec3::Zero();
  // Stratified triple draws (one index per third of the observation list, in
  // its given order): consecutive observations along a path are nearly
  // collinear, and a spread-out triple conditions the trilateration far
  // better at no extra cost.
  const int t1 = n / 3, t2 = (2 * n) / 3;
  for (int it = 0; it < total_iters; ++it) {
    const int i0 = rng.uniform_int(0, t1 - 1);
    const int i1 = rng.uniform_int(t1, t2 - 1);
    const int i2 = rng.uniform_int(t2, n - 1);
    std::vector<Vec3> cands;
    try {
      cands = trilaterate({agent_pos[i0], agent_pos[i1], agent_pos[i2]},
                          {dist[i0], dist[i1], dist[i2]});
    } catch (const std::runtime_error&) {
      continue;
    }
    // evaluate the +z candidate first so exact mirror ties resolve upward
    std::sort(cands.begin(), cands.end(), [](const Vec3& a, const Vec3& b) { return a.z() > b.z(); });
    for (const Vec3& c : cands) {
      int count = 0;
      double cost = 0.0;
      for (int i = 0; i < n; ++i) {
        const double r = (c - agent_pos[i]).norm() - dist[i];
        if (std::abs(r) <= thr) {
          ++count;
          cost += sq(r);
        } else
          cost += sq(thr);
      }
      if (cost < best_cost) {
        best_cost = cost;
        best_count = count;
        best = c;
      }
    }
  }
  if (best_count < 3) return std::nullopt;
  FeatureFit fit;
  fit.pos = best;
  fit.iters = total_iters;
  for (int pass = 0; pass < 2; ++pass) {
    fit.inliers.clear();
    for (int i = 0; i < n; ++i)
      if (std::abs((fit.pos - agent_pos[i]).norm() - dist[i]) <= thr) fit.inliers.push_back(i);
    if ((int)fit.inliers.size() < 3) return std::nullopt;
    try {
      refine_feature(fit.pos, agent_pos, dist, fit.inliers);
    } catch (const std::runtime_error&) {
      break;  // collinear inlier support: keep the consensus position as-is
    }
    // planar agent support leaves the mirror image free: settle on z >= 0
    if (agent_zmax < 1e-9 && fit.pos.z() < 0.0) fit.pos.z() = -fit.pos.z();
  }
  fit.inliers.clear();
  double ssum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = (fit.pos - agent_pos[i]).norm() - dist[i];
    if (std::abs(r) <= thr) {
      fit.inliers.push_back(i);
      ssum += r * r;
    }
  }
  if ((int)fit.inliers.size() < 3) return std::nullopt;
  fit.resid_std = std::sqrt(ssum / (double)fit.inliers.size());
  return fit;
}

DistTable table_from_rows(const std::vector<DistRow>& rows) {
  DistTable table;
  for (const DistRow& r : rows) table[r.track][r.n] = r.d_m;
  return table;
}

int auto_pa_track(const DistTable& table) {
  int pa = -1;
  size_t best = 0;
  for (const auto& [k, byn] : table)
    if (byn.size() > best) {
      best = byn.size();
      pa = k;
    }
  return pa;
}

namespace {

// Tracks restricted to [n0, n1), keeping only tracks with >= 3 observations.
std::map<int, std::map<int, double>> window_table(const DistTable& table, int n0, int n1) {
  std::map<int, std::map<int, double>> win;
  for (const auto& [k, byn] : table) {
    std::map<int, double> sel;
    for (auto it = byn.lower_bound(n0); it != byn.end() && it->first < n1; ++it) sel.insert(*it);
    if ((int)sel.size() >= 3) win.emplace(k, std::move(sel));
  }
  return win;
}

// Full extension + pruning + bundle adjustment of a seeded segment estimate
// (the deterministic tail of init_segment, reusable for re-solving a window
// from a neighbour's geometry).
void polish_segment(const std::map<int, std::map<int, double>>& win, SegmentEstimate& best,
                    const SlamConfig& cfg, RngStream& stream) {
  const double thr = inlier_threshold(cfg);
  const int n0 = best.n0, n1 = best.n1;
  extend_hypothesis(win, best.agents, best.features, thr, cfg, stream, false);
  ObsList obs;
  for (const auto& [k, n] : consensus_pairs(win, best.agents, best.features, thr))
    obs.push_back({k, n, win.at(k).at(n)});
  prune_underconstrained(best.agents, best.features, obs);
  if (best.agents.size() < 3 || best.features.size() < 3)
    throw std::runtime_error(
        "init_segment: refined estimate dropped below 3 agents or 3 features in window [" +
        std::to_string(n0) + "," + std::to_string(n1) + ")");
  const int pin_xy = best.agents.begin()->first;
  const int pin_y = std::next(best.agents.begin())->first;
  bundle_adjust(best.agents, best.features, obs, pin_xy, pin_y);
  // settle the mirror convention and the final consensus set
  for (auto& [k, p] : best.features)
    if (p.z() < 0.0) p.z() = -p.z();
  auto inl = consensus_pairs(win, best.agents, best.features, thr);
  obs.clear();
  for (const auto& [k, n] : inl) obs.push_back({k, n, win.at(k).at(n)});
  prune_underconstrained(best.agents, best.features, obs);
  if (best.agents.size() < 3 || best.features.size() < 3)
    throw std::runtime_error(
        "init_segment: refined estimate dropped below 3 agents or 3 features in window [" +
        std::to_string(n0) + "," + std::to_string(n1) + ")");
  bundle_adjust(best.agents, best.features, obs, best.agents.begin()->first,
                std::next(best.agents.begin())->first);
  best.inliers = consensus_pairs(win, best.agents, best.features, thr);
}

}  // namespace

SegmentEstimate init_segment(const DistTable& table, int n0, int n1, const SlamConfig& cfg,
                             std::uint64_t seed) {
  const double thr = inlier_threshold(cfg);
  std::map<int, std::map<int, double>> win = window_table(table, n0, n1);
  if (win.size() < 3)
    throw std::runtime_error("init_segment: K_n >= 3 violated: window [" + std::to_string(n0) +
                             "," + std::to_string(n1) + ") has " + std::to_string(win.size()) +
                             " track(s) with >= 3 observations");
  int pa = cfg.pa_track;
  if (pa < 0) {
    size_t best = 0;
    for (const auto& [k, byn] : win)
      if (byn.size() > best) {
        best = byn.size();
        pa = k;
      }
  }
  if (pa < 0 || !win.count(pa))
    throw std::runtime_error("init_segment: PA track " + std::to_string(pa) +
                             " lacks >= 3 observations in window [" + std::to_string(n0) + "," +
                             std::to_string(n1) + ")");
  std::vector<int> others;
  for (const auto& [k, byn] : win)
    if (k != pa) others.push_back(k);
  RngStream stream = derive_stream(seed, "segment", (std::uint64_t)(std::uint32_t)n0);
  const int iters = ransac_iterations(cfg, 9);
  long best_score = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  SegmentEstimate best;
  for (int it = 0; it < iters; ++it) {
    const int k1 = others[(std::size_t)stream.uniform_int(0, (int)others.size() - 1)];
    const int k2 = others[(std::size_t)stream.uniform_int(0, (int)others.size() - 1)];
    if (k1 == k2) continue;
    std::vector<int> common;
    for (const auto& [n, d] : win[pa])
      if (win[k1].count(n) && win[k2].count(n)) common.push_back(n);
    if ((int)common.size() < 3) continue;
    // Stratified seed times (one per third of the window): clustered times
    // leave the nine-range minimal problem ill-conditioned along a straight
    // stretch of the path, and a near-exact wrong root then poisons the
    // extension.
    const int m = (int)common.size();
    const int t1 = m / 3, t2 = (2 * m) / 3;
    const int j0 = stream.uniform_int(0, t1 - 1);
    const int j1 = stream.uniform_int(t1, t2 - 1);
    const int j2 = stream.uniform_int(t2, m - 1);
    std::array<int, 3> tt = {common[j0], common[j1], common[j2]};
    std::sort(tt.begin(), tt.end());
    const std::array<int, 3> kk = {pa, k1, k2};
    Eigen::Matrix3d D;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) D(i, j) = win[kk[j]][tt[i]];
    auto root = solve_minimal_planar(D, stream, cfg.seg_starts);
    if (!root) continue;
    std::map<int, Vec3> agents, feats;
    for (int i = 0; i < 3; ++i) agents[tt[i]] = Vec3(root->p[i].x(), root->p[i].y(), 0.0);
    for (int j = 0; j < 3; ++j) feats[kk[j]] = Vec3(root->a[j].x(), root->a[j].y(), 0.0);
    extend_hypothesis(win, agents, feats, thr, cfg, stream, true);
    const double cost = truncated_cost(win, agents, feats, thr);
    if (cost < best_cost) {
      best_cost = cost;
      best_score = (long)consensus_pairs(win, agents, feats, thr).size();
      best.agents = std::move(agents);
      best.features = std::move(feats);
    }
  }
  if (best_score < 9 || best.features.size() < 3)
    throw std::runtime_error(
        "init_segment: no consensus hypothesis reached the minimal support of 9 observations "
        "over 3 tracks in window [" +
        std::to_string(n0) + "," + std::to_string(n1) + ")");
  best.n0 = n0;
  best.n1 = n1;
  polish_segment(win, best, cfg, stream);
  return best;
}

MapEstimate register_segments(const std::vector<SegmentEstimate>& segments) {
  if (segments.empty()) throw std::invalid_argument("register_segments: no segments");
  std::map<int, std::vector<Vec3>> acc_a;
  std::map<int, std::vector<Vec3>> acc_f;
  std::set<std::pair<int, int>> inl;
  auto absorb = [&](const SegmentEstimate& s) {
    for (const auto& [n, p] : s.agents) acc_a[n].push_back(p);
    for (const auto& [k, p] : s.features) acc_f[k].push_back(p);
    for (const auto& pr : s.inliers) inl.insert(pr);
  };
  SegmentEstimate prev = segments[0];
  absorb(prev);
  for (std::size_t i = 1; i < segments.size(); ++i) {
    SegmentEstimate cur = segments[i];
    std::vector<int> common;
    for (const auto& [n, p] : cur.agents)
      if (prev.agents.count(n)) common.push_back(n);
    if ((int)common.size() < 3)
      throw std::runtime_error(
          "register_segments: fewer than 3 overlapping agent positions between consecutive "
          "segments");
    // Shared features break the tie when the overlapping agents are nearly
    // collinear (a reflection across the path line then fits them equally well).
    std::vector<int> common_f;
    for (const auto& [k, p] : cur.features)
      if (prev.features.count(k)) common_f.push_back(k);
    double best_score = std::numeric_limits<double>::infinity();
    double bc = 1.0, bs = 0.0;
    Eigen::Vector2d bt = Eigen::Vector2d::Zero();
    int bmir = 0;
    for (int mir = 0; mir <= 1; ++mir) {
      Eigen::Vector2d qc = Eigen::Vector2d::Zero(), pc = Eigen::Vector2d::Zero();
      for (int n : common) {
        const Vec3& q = cur.agents[n];
        qc += Eigen::Vector2d(q.x(), mir ? -q.y() : q.y());
        pc += Eigen::Vector2d(prev.agents[n].x(), prev.agents[n].y());
      }
      qc /= (double)common.size();
      pc /= (double)common.size();
      double cross = 0.0, dot = 0.0;
      for (int n : common) {
        const Vec3& q3 = cur.agents[n];
        const Eigen::Vector2d q(q3.x() - qc.x(), (mir ? -q3.y() : q3.y()) - qc.y());
        const Eigen::Vector2d p(prev.agents[n].x() - pc.x(), prev.agents[n].y() - pc.y());
        cross += q.x() * p.y() - q.y() * p.x();
        dot += q.dot(p);
      }
      const double th = std::atan2(cross, dot);
      const double c = std::cos(th), s = std::sin(th);
      const Eigen::Vector2d t = pc - Eigen::Vector2d(c * qc.x() - s * qc.y(),
                                                     s * qc.x() + c * qc.y());
      double sse = 0.0;
      for (int n : common) {
        const Vec3& q3 = cur.agents[n];
        const double qx = q3.x(), qy = mir ? -q3.y() : q3.y();
        const double rx = c * qx - s * qy + t.x();
        const double ry = s * qx + c * qy + t.y();
        sse += sq(rx - prev.agents[n].x()) + sq(ry - prev.agents[n].y());
      }
      // Capped in-plane feature mismatch: decisive at a collinear overlap,
      // negligible next to the agent SSE when the overlap is well conditioned.
      const double cap2 = 1.0;
      double fpen = 0.0;
      for (int k : common_f) {
        const Vec3& q3 = cur.features[k];
        const double qx = q3.x(), qy = mir ? -q3.y() : q3.y();
        const double rx = c * qx - s * qy + t.x();
        const double ry = s * qx + c * qy + t.y();
        const double e2 = sq(rx - prev.features[k].x()) + sq(ry - prev.features[k].y());
        fpen += std::min(e2, cap2);
      }
      const double score = sse + fpen;
      if (score < best_score) {
        best_score = score;
        bc = c;
        bs = s;
        bt = t;
        bmir = mir;
      }
    }
    auto xf = [&](const Vec3& p) {
      const double qx = p.x(), qy = bmir ? -p.y() : p.y();
      return Vec3(bc * qx - bs * qy + bt.x(), bs * qx + bc * qy + bt.y(), p.z());
    };
    for (auto& [n, p] : cur.agents) p = xf(p);
    for (auto& [k, p] : cur.features) p = xf(p);
    prev = std::move(cur);
    absorb(prev);
  }
  MapEstimate est;
  for (const auto& [n, v] : acc_a) {
    Vec3 m = Vec3::Zero();
    for (const Vec3& p : v) m += p;
    est.agents[n] = m / (double)v.size();
  }
  // Features are seen by many segments; a coordinate-wise median keeps one
  // badly solved window from dragging the combined position off.
  for (const auto& [k, v] : acc_f) {
    Vec3 m;
    for (int c = 0; c < 3; ++c) {
      std::vector<double> vals;
      vals.reserve(v.size());
      for (const Vec3& p : v) vals.push_back(p(c));
      std::nth_element(vals.begin(), vals.begin() + (long)(vals.size() / 2), vals.end());
      const double hi = vals[vals.size() / 2];
      if (vals.size() % 2 == 1)
        m(c) = hi;
      else {
        std::nth_element(vals.begin(), vals.begin() + (long)(vals.size() / 2 - 1), vals.end());
        m(c) = 0.5 * (hi + vals[vals.size() / 2 - 1]);
      }
    }
    est.features[k] = m;
  }
  est.inliers.assign(inl.begin(), inl.end());
  return est;
}

void joint_refine(MapEstimate& est, const DistTable& table, const SlamConfig& cfg) {
  const double thr = inlier_threshold(cfg);
  auto gather = [&]() {
    ObsList obs;
    for (const auto& [k, byn] : table) {
      auto f = est.features.find(k);
      if (f == est.features.end()) continue;
      for (const auto& [n, d] : byn) {
        auto a = est.agents.find(n);
        if (a == est.agents.end()) continue;
        if (std::abs((a->second - f->second).norm() - d) <= thr) obs.push_back({k, n, d});
      }
    }
    return obs;
  };
  auto refine_pass = [&]() {
    ObsList obs = gather();
    prune_underconstrained(est.agents, est.features, obs);
    if (est.agents.size() < 2 || est.features.size() < 3)
      throw std::runtime_error("joint_refine: too few constrained positions after pruning");
    // the surviving observation graph must be one connected component
    {
      std::map<int, int> ag_node, ft_node;
      for (const auto& [k, n, d] : obs) {
        if (!ft_node.count(k)) {
          const int id = (int)(ft_node.size() + ag_node.size());
          ft_node[k] = id;
        }
        if (!ag_node.count(n)) {
          const int id = (int)(ft_node.size() + ag_node.size());
          ag_node[n] = id;
        }
      }
      std::vector<int> parent(ft_node.size() + ag_node.size());
      std::iota(parent.begin(), parent.end(), 0);
      std::function<int(int)> find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
      };
      for (const auto& [k, n, d] : obs) {
        const int a = find(ft_node[k]), b = find(ag_node[n]);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
      std::map<int, long> comp_sz;
      for (const auto& [k, n, d] : obs) ++comp_sz[find(ft_node[k])];
      if (comp_sz.size() > 1) {
        int main_root = -1;
        long main_sz = -1;
        for (const auto& [root, szc] : comp_sz)
          if (szc > main_sz) {
            main_sz = szc;
            main_root = root;
          }
        std::string msg = "joint_refine: disconnected inlier graph; orphaned ids:";
        for (const auto& [k, p] : est.features) {
          auto node = ft_node.find(k);
          if (node == ft_node.end() || find(node->second) != main_root)
            msg += " feature " + std::to_string(k);
        }
        for (const auto& [n, p] : est.agents) {
          auto node = ag_node.find(n);
          if (node == ag_node.end() || find(node->second) != main_root)
            msg += " agent " + std::to_string(n);
        }
        throw std::runtime_error(msg);
      }
    }
    const int pin_xy = est.agents.begin()->first;
    const int pin_y = std::next(est.agents.begin())->first;
    bundle_adjust(est.agents, est.features, obs, pin_xy, pin_y, 80);
  };
  refine_pass();
  // Agent positions dropped by the first prune (typically at seams between a
  // well and a badly solved window) are re-trilaterated from the refined
  // features and folded back in for a second pass.
  {
    RngStream rng = derive_stream(cfg.seed, "joint", 0);
    std::set<int> all_n;
    for (const auto& [k, byn] : table)
      for (const auto& [n, d] : byn) all_n.insert(n);
    for (int n : all_n) {
      if (est.agents.count(n)) continue;
      std::vector<std::pair<int, double>> entries;
      for (const auto& [k, byn] : table) {
        if (!est.features.count(k)) continue;
        auto it = byn.find(n);
        if (it != byn.end()) entries.push_back({k, it->second});
      }
      auto p = solve_agent(est.features, entries, thr, rng);
      if (p) est.agents[n] = *p;
    }
  }
  refine_pass();
  double agent_zmax = 0.0;
  for (const auto& [n, p] : est.agents) agent_zmax = std::max(agent_zmax, std::abs(p.z()));
  if (agent_zmax < 1e-12)
    for (auto& [k, p] : est.features)
      if (p.z() < 0.0) p.z() = -p.z();
  est.inliers.clear();
  long total = 0;
  double ssum = 0.0;
  for (const auto& [k, byn] : table) {
    auto f = est.features.find(k);
    if (f == est.features.end()) continue;
    for (const auto& [n, d] : byn) {
      auto a = est.agents.find(n);
      if (a == est.agents.end()) continue;
      ++total;
      const double r = (a->second - f->second).norm() - d;
      if (std::abs(r) <= thr) {
        est.inliers.push_back({k, n});
        ssum += r * r;
      }
    }
  }
  est.inlier_ratio = total > 0 ? (double)est.inliers.size() / (double)total : 0.0;
  est.resid_std = est.inliers.empty() ? 0.0 : std::sqrt(ssum / (double)est.inliers.size());
  est.z_plus = true;
}

namespace {

// Cross-window consistency repair. Feature pair distances are invariant to
// each window's local gauge, so a window whose pair distances disagree with
// the cross-segment median converged to a wrong basin (a near-isometric flex
// of the true geometry — such flexes can fit a single window's ranges almost
// exactly). Re-solve each such window seeded with a consistent neighbour's
// overlapping agents and features; sweep both directions so repairs chain.
void repair_segments(std::vector<SegmentEstimate>& segs, const DistTable& table,
                     const SlamConfig& cfg) {
  const int S = (int)segs.size();
  if (S < 3) return;
  std::map<std::pair<int, int>, std::vector<double>> pd;
  for (const auto& s : segs)
    for (auto i = s.features.begin(); i != s.features.end(); ++i)
      for (auto j = std::next(i); j != s.features.end(); ++j)
        pd[{i->first, j->first}].push_back((i->second - j->second).norm());
  // Only feature pairs seen by at least half the windows vote; rarely seen
  // pairs (short-lived tracks) have no reliable majority.
  const std::size_t min_support = (std::size_t)std::max(3, S / 2);
  std::map<std::pair<int, int>, double> med;
  for (auto& [key, v] : pd) {
    if (v.size() < min_support) continue;
    std::nth_element(v.begin(), v.begin() + (long)(v.size() / 2), v.end());
    med[key] = v[v.size() / 2];
  }
  if (med.empty()) return;
  const double ctol = std::max(0.05, 2.0 * inlier_threshold(cfg));
  auto consistent = [&](const SegmentEstimate& s) {
    for (auto i = s.features.begin(); i != s.features.end(); ++i)
      for (auto j = std::next(i); j != s.features.end(); ++j) {
        auto it = med.find({i->first, j->first});
        if (it != med.end() && std::abs((i->second - j->second).norm() - it->second) > ctol)
          return false;
      }
    return true;
  };
  std::vector<char> good(S);
  for (int i = 0; i < S; ++i) good[i] = consistent(segs[i]);
  auto try_repair = [&](int i, int j) {
    if (good[i] || !good[j]) return;
    SegmentEstimate fresh;
    fresh.n0 = segs[i].n0;
    fresh.n1 = segs[i].n1;
    for (const auto& [n, p] : segs[j].agents)
      if (n >= fresh.n0 && n < fresh.n1) fresh.agents[n] = p;
    if ((int)fresh.agents.size() < 3) return;
    fresh.features = segs[j].features;
    auto win = window_table(table, fresh.n0, fresh.n1);
    if ((int)win.size() < 3) return;
    RngStream stream = derive_stream(cfg.seed, "repair", (std::uint64_t)(std::uint32_t)fresh.n0);
    try {
      polish_segment(win, fresh, cfg, stream);
    } catch (const std::runtime_error&) {
      return;
    }
    if (consistent(fresh)) {
      segs[(std::size_t)i] = std::move(fresh);
      good[(std::size_t)i] = 1;
    }
  };
  for (int i = 1; i < S; ++i) try_repair(i, i - 1);
  for (int i = S - 2; i >= 0; --i) try_repair(i, i + 1);
}

}  // namespace

MapEstimate slam_segmented(const std::vector<DistRow>& rows, const SlamConfig& cfg) {
  DistTable table = table_from_rows(rows);
  if (table.empty()) throw std::invalid_argument("slam_segmented: empty distance table");
  int nmin = std::numeric_limits<int>::max(), nmax = std::numeric_limits<int>::min();
  for (const auto& [k, byn] : table) {
    nmin = std::min(nmin, byn.begin()->first);
    nmax = std::max(nmax, byn.rbegin()->first);
  }
  // Tracks that never cover a full window cannot be solved consistently
  // across segments; drop them unless that would leave too few tracks.
  {
    const int span = nmax + 1 - nmin;
    const std::size_t min_rows =
        (std::size_t)std::max(6, std::min(std::max(cfg.seg_len, 6), span));
    DistTable kept;
    for (const auto& [k, byn] : table)
      if (byn.size() >= min_rows) kept[k] = byn;
    if (kept.size() >= 3) {
      table = std::move(kept);
      nmin = std::numeric_limits<int>::max();
      nmax = std::numeric_limits<int>::min();
      for (const auto& [k, byn] : table) {
        nmin = std::min(nmin, byn.begin()->first);
        nmax = std::max(nmax, byn.rbegin()->first);
      }
    }
  }
  const int len = std::max(cfg.seg_len, 6);
  const int stride = std::max(1, cfg.seg_len - cfg.seg_overlap);
  std::vector<int> starts;
  if (nmax + 1 - nmin <= len)
    starts.push_back(nmin);
  else {
    for (int s = nmin; s + len < nmax + 1; s += stride) starts.push_back(s);
    const int last = nmax + 1 - len;
    if (starts.empty() || starts.back() != last) starts.push_back(last);
  }
  std::vector<std::optional<SegmentEstimate>> segs(starts.size());
  std::vector<std::string> errors(starts.size());
  parallel_chunks((int)starts.size(), [&](int b, int e) {
    for (int i = b; i < e; ++i) {
      try {
        segs[(std::size_t)i] =
            init_segment(table, starts[(std::size_t)i],
                         std::min(starts[(std::size_t)i] + len, nmax + 1), cfg, cfg.seed);
      } catch (const std::runtime_error& ex) {
        errors[(std::size_t)i] = ex.what();
      }
    }
  });
  std::vector<SegmentEstimate> ok;
  std::vector<std::string> failed;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i])
      ok.push_back(*segs[i]);
    else
      failed.push_back(errors[i]);
  }
  if (ok.empty()) throw std::runtime_error("slam_segmented: no segment could be initialized");
  repair_segments(ok, table, cfg);
  MapEstimate est = register_segments(ok);
  est.segments_total = (int)starts.size();
  est.segments_ok = (int)ok.size();
  est.segment_errors = std::move(failed);
  joint_refine(est, table, cfg);
  return est;
}

RigidTransform align_to_truth(const std::vector<Vec3>& est, const std::vector<Vec3>& truth) {
  if (est.size() != truth.size())
    throw std::invalid_argument("align_to_truth: point lists differ in size");
  if (est.size() < 3) throw std::runtime_error("align_to_truth: need at least 3 point pairs");
  Vec3 ce = Vec3::Zero(), ct = Vec3::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    ce += est[i];
    ct += truth[i];
  }
  ce /= (double)est.size();
  ct /= (double)truth.size();
  Eigen::Matrix3d C = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) C += (est[i] - ce) * (truth[i] - ct).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(C, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (sv(1) <= 1e-12 * std::max(sv(0), 1e-300))
    throw std::runtime_error("align_to_truth: degenerate point configuration");
  const Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
  Eigen::Matrix3d Dm = Eigen::Matrix3d::Identity();
  Dm(2, 2) = (V * U.transpose()).determinant() >= 0.0 ? 1.0 : -1.0;
  RigidTransform out;
  out.R = V * Dm * U.transpose();
  out.t = ct - out.R * ce;
  return out;
}

double rmse(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("rmse: point lists differ in size");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]).squaredNorm();
  return std::sqrt(s / (double)a.size());
}

}  // namespace mpslam
