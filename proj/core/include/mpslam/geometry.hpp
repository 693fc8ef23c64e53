#pragma once
// Mirror-image multipath geometry: planar reflectors, virtual anchors,
// specular visibility and ground-truth path parameters.

#include <optional>
#include <string>
#include <vector>

#include "mpslam/types.hpp"

namespace mpslam {

// A bounded planar reflector: the plane n.x = offset restricted to a
// rectangle [u0,u1] x [v0,v1] in a deterministic in-plane basis (u, v)
// anchored at the point offset * n.
//
// Basis construction: u = normalize(ez x n) when n is not (anti)parallel to
// ez, else u = ex; v = n x u. Both are unit and orthogonal to n.
struct Surface {
  Vec3 n = Vec3::UnitX();  // unit normal
  double offset = 0.0;     // signed plane offset along n
  double u0 = -1.0, u1 = 1.0;
  double v0 = -1.0, v1 = 1.0;
  double loss = 0.7;       // amplitude loss factor per bounce, in (0, 1]

  Vec3 basis_u() const;
  Vec3 basis_v() const;
  Vec3 anchor() const { return offset * n; }
  // Mirror a point across the (unbounded) plane.
  Vec3 mirror_point(const Vec3& p) const { return p - 2.0 * (n.dot(p) - offset) * n; }
  // Mirror a direction (linear part of the reflection).
  Vec3 mirror_dir(const Vec3& v) const { return v - 2.0 * n.dot(v) * n; }
  // Signed distance of p from the plane.
  double signed_dist(const Vec3& p) const { return n.dot(p) - offset; }
  // True when p lies within the rectangular extent (p assumed near the plane).
  bool within_extent(const Vec3& p, double tol = 1e-9) const;

  void validate() const;
};

// Pose of the anchor array: origin in world coordinates and rotation whose
// columns are the array axes expressed in world coordinates (x = boresight,
// z = array up).
struct ArrayPose {
  Vec3 origin = Vec3::Zero();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();

  Vec3 to_local_dir(const Vec3& world_dir) const { return R.transpose() * world_dir; }
  Vec3 to_world_dir(const Vec3& local_dir) const { return R * local_dir; }
};

// Yaw (about z), then pitch (about the resulting y), then roll (about the
// resulting x); identity maps boresight to world +x.
Eigen::Matrix3d rotation_ypr(double yaw, double pitch, double roll);

// A physical anchor (order 0) or virtual anchor (mirror image of the PA):
// chain lists reflector indices in the order the mirroring is applied to the
// PA position, i.e. chain.front() is the surface hit LAST by the propagating
// wave (nearest the PA) and chain.back() the surface hit FIRST from the agent.
struct Feature {
  Vec3 pos = Vec3::Zero();
  std::vector<int> chain;  // empty for the physical anchor
  double gain = 1.0;       // cumulative amplitude loss over the chain

  int order() const { return static_cast<int>(chain.size()); }
};

// Mirror image of an anchor position across surface s.
Vec3 mirror_anchor(const Vec3& anchor, const Surface& s);

// Enumerate the PA and all virtual anchors up to max_order bounces.
// Chains never repeat a surface twice in a row; positions are deduplicated
// at 1e-9 m (first chain in BFS order wins). Output is sorted by order, then
// by chain lexicographically.
std::vector<Feature> enumerate_features(const Vec3& pa, const std::vector<Surface>& surfaces,
                                        int max_order);

// Ground-truth path parameters of feature f observed from agent position p:
// distance is the unfolded path length |p - f.pos|; angles are the spherical
// angles, in the array frame, of the unit vector from the PA toward the
// arriving ray (toward the last reflection point; toward the agent for LOS).
MpcParams true_params(const Vec3& p, const Feature& f, const std::vector<Surface>& surfaces,
                      const ArrayPose& pose);

// Specular visibility: walks the unfolded ray agent -> ... -> PA and checks
// every reflection point against its surface extent and segment interior.
// The PA (empty chain) is always visible.
bool visible(const Vec3& p, const Feature& f, const std::vector<Surface>& surfaces,
             const Vec3& pa);

// Reflection points of the specular path from agent p to the PA via f's
// chain, ordered as encountered from the agent. Empty when not visible.
std::optional<std::vector<Vec3>> specular_points(const Vec3& p, const Feature& f,
                                                 const std::vector<Surface>& surfaces,
                                                 const Vec3& pa);

// Agent trajectory sampled at a fixed spatial step.
struct Trajectory {
  std::vector<Vec3> p;  // agent positions, one per snapshot
  double dt_s = 1.0;    // sampling interval

  int size() const { return static_cast<int>(p.size()); }
};

// Resample a waypoint polyline at constant arc-length step (m). The first
// sample is the first waypoint; subsequent samples advance exactly `step`
// along the polyline until the end is passed.
Trajectory trajectory_from_waypoints(const std::vector<Vec3>& waypoints, double step, double dt_s);

}  // namespace mpslam
