#pragma once
// File formats shared between pipeline stages. Every writer is deterministic
// (no timestamps, fixed float formatting) and every reader validates just
// enough to fail loudly on corrupt or mismatched inputs.

#include <array>
#include <string>
#include <vector>

#include "mpslam/ekf.hpp"
#include "mpslam/sage.hpp"
#include "mpslam/signal.hpp"
#include "mpslam/slam.hpp"
#include "mpslam/types.hpp"

namespace mpslam {

// ---- snapshot series: binary payload + JSON sidecar (<path>.json) ----
// Layout: magic "MPCSNAP1", u32 N, N_f, N_Rx (little-endian), then N records
// of N_f*N_Rx complex float64 (re, im interleaved), frequency-major within
// each antenna. The sidecar holds the RF configuration, seed and dt.
void write_snapshots(const std::string& path, const SnapshotSeries& series);
SnapshotSeries read_snapshots(const std::string& path);

// ---- ground truth ----
struct TruthFile {
  std::vector<Vec3> agents;           // agent position per snapshot
  double dt_s = 1.0;
  std::vector<Vec3> features;         // anchor positions, index l (0 = PA)
  std::vector<int> feature_order;     // bounce count per feature
  // params[l][n] = {d_m, az_rad, el_rad, visible}
  std::vector<std::vector<std::array<double, 4>>> params;
};
void write_truth(const std::string& path, const TruthFile& truth);
TruthFile read_truth(const std::string& path);

// ---- distance table CSV: header n,k,d_m,az_rad,el_rad,sinr_db ----
void write_distance_table(const std::string& path, const std::vector<DistRow>& rows);
std::vector<DistRow> read_distance_table(const std::string& path);

// ---- track archive: JSON lines {id, birth_n, death_n, mean_sinr_db} ----
void write_track_archive(const std::string& path, const std::vector<TrackRecord>& tracks);
std::vector<TrackRecord> read_track_archive(const std::string& path);

// ---- detection dump CSV (debug) ----
void write_detections(const std::string& path, const std::vector<Detection>& dets);

// ---- map estimate + evaluation report JSON ----
void write_map_estimate(const std::string& path, const MapEstimate& est);
MapEstimate read_map_estimate(const std::string& path);

struct EvalReport {
  double rmse_m = 0.0;
  double max_dev_m = 0.0;
  double inlier_ratio = 0.0;
  double resid_std_m = 0.0;
};
void write_report(const std::string& path, const EvalReport& report);
EvalReport read_report(const std::string& path);

}  // namespace mpslam
