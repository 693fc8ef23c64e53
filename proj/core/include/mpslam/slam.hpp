#pragma once
// Distance-only robust localization and mapping on the track table produced
// by the filter: per-feature RANSAC against a known trajectory, and the
// fully unknown segmented pipeline (minimal planar seeds, alternating
// trilateration extension, rigid registration, joint refinement).

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpslam/ekf.hpp"
#include "mpslam/rng.hpp"
#include "mpslam/types.hpp"

namespace mpslam {

struct SlamConfig {
  double sigma_inl = 0.046;     // inlier residual std, m (threshold = 3 sigma)
  double confidence = 0.999;    // RANSAC success target
  double outlier_prior = 0.25;  // assumed outlier fraction
  int ransac_min_iters = 20;
  int ransac_max_iters = 5000;
  int seg_len = 100;            // segment window length (snapshots)
  int seg_overlap = 50;         // overlap between consecutive windows
  int pa_track = -1;            // LOS track id; -1 = auto (max support)
  int seg_starts = 8;           // multi-starts of the minimal planar solver
  std::uint64_t seed = 1234;    // RANSAC sampling seed
};

double inlier_threshold(const SlamConfig& cfg);  // 3 sigma_inl
// Standard confidence formula for the iteration count with minimal sample
// size m, clamped to [min_iters, max_iters]; a 2x margin absorbs the finite
// success rate of the iterative minimal solver.
int ransac_iterations(const SlamConfig& cfg, int m);

// Closed-form three-sphere trilateration. Returns one point (tangent) or the
// mirror pair ordered [+side, -side] relative to the anchors' plane normal
// (ex x ey). Throws std::runtime_error on collinear anchors or a negative
// discriminant beyond tolerance.
std::vector<Vec3> trilaterate(const std::array<Vec3, 3>& anchors,
                              const std::array<double, 3>& ranges, double tol = 1e-9);

// Overdetermined Gauss-Newton range intersection (>= 4 anchors): single
// solution from a linearized start. Throws on degenerate geometry.
Vec3 trilaterate_ls(const std::vector<Vec3>& anchors, const std::vector<double>& ranges);

struct FeatureFit {
  Vec3 pos = Vec3::Zero();
  std::vector<int> inliers;  // indices into the observation list
  double resid_std = 0.0;    // std of inlier residuals
  int iters = 0;
};

// Robust single-feature mapping from known agent positions and one track's
// distances: RANSAC over 3-observation minimal samples, consensus by the
// 3-sigma threshold, then damped Gauss-Newton refinement on the inliers.
// Mirror-ambiguous hypotheses (planar agent support) resolve to z >= 0.
// Throws when fewer than 3 observations are given; returns nullopt when no
// hypothesis reaches 3 inliers or the support is degenerate (collinear).
std::optional<FeatureFit> ransac_feature(const std::vector<Vec3>& agent_pos,
                                         const std::vector<double>& dist, const SlamConfig& cfg,
                                         RngStream& rng, int iters = 0);

// Damped Gauss-Newton polish of a feature position against a subset of
// observations. Returns the final residual-squared sum.
double refine_feature(Vec3& pos, const std::vector<Vec3>& agent_pos,
                      const std::vector<double>& dist, const std::vector<int>& subset);

// ---------- segmented pipeline (unknown trajectory) ----------

// Distance table keyed for SLAM use: track -> (snapshot -> distance).
using DistTable = std::map<int, std::map<int, double>>;
DistTable table_from_rows(const std::vector<DistRow>& rows);
int auto_pa_track(const DistTable& table);

struct SegmentEstimate {
  int n0 = 0, n1 = 0;                        // window [n0, n1)
  std::map<int, Vec3> agents;                // snapshot -> position (z = 0)
  std::map<int, Vec3> features;              // track -> position (z >= 0)
  std::vector<std::pair<int, int>> inliers;  // (track, snapshot)
};

// Seed + extend + refine one window. The minimal sample is the PA track plus
// two other tracks at three common times, solved as the planar 9-unknown
// range problem by deterministic multi-start damped Gauss-Newton under the
// gauge p_first = origin, p_second on +x, third agent y > 0; extension
// alternates agent trilateration (min |z|, then planar projection) and
// feature trilateration (+z). The max-consensus hypothesis is refined by the
// damped in-window adjustment. Throws std::runtime_error naming the violated
// support count when the window cannot seed a valid estimate.
SegmentEstimate init_segment(const DistTable& table, int n0, int n1, const SlamConfig& cfg,
                             std::uint64_t seed);

struct MapEstimate {
  std::map<int, Vec3> agents;                // snapshot -> position
  std::map<int, Vec3> features;              // track -> position
  std::vector<std::pair<int, int>> inliers;  // (track, snapshot)
  double inlier_ratio = 0.0;
  double resid_std = 0.0;
  bool z_plus = true;  // feature z-sign convention flag
  int segments_total = 0, segments_ok = 0;
  std::vector<std::string> segment_errors;  // per-window failure diagnostics
};

// Chain-register segments into the first segment's frame by least-squares
// proper z-rotation + in-plane translation over >= 3 overlapping agent times
// (both chiralities tried; lower SSE wins), then average every agent time
// and feature over the segments that contain it. Throws when an overlap has
// fewer than 3 common times.
MapEstimate register_segments(const std::vector<SegmentEstimate>& segments);

// Joint damped Gauss-Newton over all agent (x, y) and feature (x, y, z)
// coordinates on the inlier graph (agents/features with < 3 supporting
// observations are dropped first), gauge-pinned to the first agent and the
// second agent's y. Agent z stays 0. Throws std::runtime_error listing the
// orphaned ids when the surviving observation graph is disconnected.
// Updates positions, inliers and stats in place.
void joint_refine(MapEstimate& est, const DistTable& table, const SlamConfig& cfg);

// Full segmented pipeline.
MapEstimate slam_segmented(const std::vector<DistRow>& rows, const SlamConfig& cfg);

// ---------- evaluation ----------

struct RigidTransform {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 apply(const Vec3& p) const { return R * p + t; }
};

// Least-squares rigid alignment (proper rotation) of matched point pairs.
// Throws when the point spread is rank-deficient (fewer than 2 independent
// directions).
RigidTransform align_to_truth(const std::vector<Vec3>& est, const std::vector<Vec3>& truth);

double rmse(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

}  // namespace mpslam
