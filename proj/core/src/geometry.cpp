#include "mpslam/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mpslam {

Vec3 Surface::basis_u() const {
  Vec3 ez = Vec3::UnitZ();
  Vec3 u = ez.cross(n);
  if (u.norm() < 1e-9) return Vec3::UnitX();
  return u.normalized();
}

Vec3 Surface::basis_v() const { return n.cross(basis_u()); }

bool Surface::within_extent(const Vec3& p, double tol) const {
  Vec3 rel = p - anchor();
  double u = basis_u().dot(rel);
  double v = basis_v().dot(rel);
  return u >= u0 - tol && u <= u1 + tol && v >= v0 - tol && v <= v1 + tol;
}

void Surface::validate() const {
  if (std::abs(n.norm() - 1.0) > 1e-9) throw std::invalid_argument("surface: normal must be unit");
  if (u1 <= u0 || v1 <= v0) throw std::invalid_argument("surface: empty extent");
  if (loss <= 0.0 || loss > 1.0) throw std::invalid_argument("surface: loss must be in (0, 1]");
}

Eigen::Matrix3d rotation_ypr(double yaw, double pitch, double roll) {
  Eigen::Matrix3d Rz = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  Eigen::Matrix3d Ry = Eigen::AngleAxisd(pitch, Vec3::UnitY()).toRotationMatrix();
  Eigen::Matrix3d Rx = Eigen::AngleAxisd(roll, Vec3::UnitX()).toRotationMatrix();
  return Rz * Ry * Rx;
}

Vec3 mirror_anchor(const Vec3& anchor, const Surface& s) { return s.mirror_point(anchor); }

std::vector<Feature> enumerate_features(const Vec3& pa, const std::vector<Surface>& surfaces,
                                        int max_order) {
  if (max_order < 0) throw std::invalid_argument("enumerate_features: max_order must be >= 0");
  for (const auto& s : surfaces) s.validate();

  std::vector<Feature> out;
  Feature root;
  root.pos = pa;
  out.push_back(root);

  auto is_duplicate = [&out](const Vec3& p) {
    return std::any_of(out.begin(), out.end(),
                       [&p](const Feature& f) { return (f.pos - p).norm() <= 1e-9; });
  };

  // breadth-first over chains: frontier holds features of the current order
  std::vector<Feature> frontier{root};
  for (int order = 1; order <= max_order; ++order) {
    std::vector<Feature> next;
    for (const Feature& f : frontier) {
      for (int si = 0; si < static_cast<int>(surfaces.size()); ++si) {
        if (!f.chain.empty() && f.chain.back() == si) continue;  // no immediate repeat
        Feature g;
        g.chain = f.chain;
        g.chain.push_back(si);
        g.pos = surfaces[si].mirror_point(f.pos);
        g.gain = f.gain * surfaces[si].loss;
        next.push_back(g);
      }
    }
    // lexicographic chain order within this order for a stable catalog
    std::sort(next.begin(), next.end(),
              [](const Feature& a, const Feature& b) { return a.chain < b.chain; });
    for (const Feature& g : next) {
      if (!is_duplicate(g.pos)) out.push_back(g);
    }
    frontier = std::move(next);
  }
  return out;
}

MpcParams true_params(const Vec3& p, const Feature& f, const std::vector<Surface>& surfaces,
                      const ArrayPose& pose) {
  MpcParams mu;
  mu.d = (p - f.pos).norm();

  // Fold the agent across the chain in PA-out order (chain.front() first) to
  // get the source image the array actually "sees" along the arriving ray.
  Vec3 image = p;
  for (int si : f.chain) {
    if (si < 0 || si >= static_cast<int>(surfaces.size()))
      throw std::out_of_range("true_params: chain references unknown surface");
    image = surfaces[si].mirror_point(image);
  }
  Vec3 look = image - pose.origin;
  double norm = look.norm();
  if (norm < 1e-12) throw std::invalid_argument("true_params: agent image coincides with PA");
  Vec3 u = pose.to_local_dir(look / norm);
  mu.az = std::atan2(u.y(), u.x());
  mu.el = std::asin(std::clamp(u.z(), -1.0, 1.0));
  return mu;
}

std::optional<std::vector<Vec3>> specular_points(const Vec3& p, const Feature& f,
                                                 const std::vector<Surface>& surfaces,
                                                 const Vec3& pa) {
  std::vector<Vec3> pts;
  if (f.chain.empty()) return pts;  // LOS: no reflection points

  // Walk from the agent side. The surface hit first from the agent is
  // chain.back(); before each hop the remaining chain folded onto the PA
  // gives the current target image.
  std::vector<int> remaining = f.chain;
  Vec3 start = p;
  while (!remaining.empty()) {
    int si = remaining.back();
    const Surface& s = surfaces[si];
    // target = PA folded across the remaining chain (in chain order)
    Vec3 target = pa;
    for (int sj : remaining) target = surfaces[sj].mirror_point(target);

    Vec3 dir = target - start;
    double denom = s.n.dot(dir);
    if (std::abs(denom) < 1e-12) return std::nullopt;  // ray parallel to plane
    double t = (s.offset - s.n.dot(start)) / denom;
    if (t <= 1e-12 || t >= 1.0 - 1e-12) return std::nullopt;  // hit outside segment interior
    Vec3 q = start + t * dir;
    if (!s.within_extent(q)) return std::nullopt;
    pts.push_back(q);
    start = q;
    remaining.pop_back();
  }
  return pts;
}

bool visible(const Vec3& p, const Feature& f, const std::vector<Surface>& surfaces,
             const Vec3& pa) {
  return specular_points(p, f, surfaces, pa).has_value();
}

Trajectory trajectory_from_waypoints(const std::vector<Vec3>& waypoints, double step, double dt_s) {
  if (waypoints.size() < 1) throw std::invalid_argument("trajectory: need at least one waypoint");
  if (step <= 0) throw std::invalid_argument("trajectory: step must be positive");
  Trajectory tr;
  tr.dt_s = dt_s;
  tr.p.push_back(waypoints.front());
  if (waypoints.size() == 1) return tr;

  std::size_t seg = 0;          // current polyline segment
  double along = 0.0;           // arc length consumed within segment
  double need = step;           // distance to the next sample
  while (seg + 1 < waypoints.size()) {
    Vec3 a = waypoints[seg], b = waypoints[seg + 1];
    double len = (b - a).norm();
    if (len < 1e-12) { ++seg; along = 0.0; continue; }
    double avail = len - along;
    if (need <= avail + 1e-12) {
      along += need;
      tr.p.push_back(a + (b - a) * (along / len));
      need = step;
    } else {
      need -= avail;
      ++seg;
      along = 0.0;
    }
  }
  return tr;
}

}  // namespace mpslam
