#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "mpslam/ekf.hpp"
#include "mpslam/geometry.hpp"
#include "mpslam/io.hpp"
#include "mpslam/letterpath.hpp"
#include "mpslam/parallel.hpp"
#include "mpslam/rng.hpp"
#include "mpslam/sage.hpp"
#include "mpslam/scenario.hpp"
#include "mpslam/signal.hpp"
#include "mpslam/slam.hpp"
#include "mpslam/svg.hpp"
#include "mpslam/types.hpp"

namespace mpslam {

namespace {

std::string g_stage = "startup";

std::string pick(const std::string& explicit_path, const std::string& outdir,
                 const char* default_name) {
  return explicit_path.empty() ? outdir + "/" + default_name : explicit_path;
}

void ensure_outdir(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.outdir, ec);
  if (ec) throw ConfigError("", "cannot create output directory: " + cfg.outdir);
}

FilterConfig filter_config(const RunConfig& cfg) {
  FilterConfig fc;
  fc.k_max = cfg.k_max;
  fc.beta_max = cfg.beta_max;
  fc.eps_birth_db = cfg.eps_birth_db;
  fc.eps_death_db = cfg.eps_death_db;
  fc.rho_birth = cfg.rho_birth;
  fc.q_d = cfg.q_d;
  fc.q_az = cfg.q_az;
  fc.q_el = cfg.q_el;
  fc.q_alpha = cfg.q_alpha;
  fc.q_phi = cfg.q_phi;
  fc.rate_std_d = cfg.rate_std_d;
  fc.rate_std_ang = cfg.rate_std_ang;
  fc.birth_stride = cfg.birth_stride;
  fc.grids.n_az = cfg.grid_az;
  fc.grids.n_el = cfg.grid_el;
  fc.grids.az_min = cfg.grid_az_min_deg * kPi / 180.0;
  fc.grids.az_max = cfg.grid_az_max_deg * kPi / 180.0;
  fc.grids.el_min = cfg.grid_el_min_deg * kPi / 180.0;
  fc.grids.el_max = cfg.grid_el_max_deg * kPi / 180.0;
  fc.grids.nf_prime_mult = cfg.nf_mult;
  return fc;
}

SlamConfig slam_config(const RunConfig& cfg) {
  SlamConfig sc;
  sc.sigma_inl = cfg.sigma_inl;
  sc.confidence = cfg.confidence;
  sc.outlier_prior = cfg.outlier_prior;
  sc.seg_len = cfg.seg_len;
  sc.seg_overlap = cfg.seg_overlap;
  sc.pa_track = cfg.pa_track;
  sc.seg_starts = cfg.seg_starts;
  sc.seed = cfg.slam_seed;
  return sc;
}

// Known-trajectory mapping: an independent robust fit per track against the
// given agent positions.
MapEstimate map_known_positions(const std::vector<DistRow>& rows, const TruthFile& truth,
                                const SlamConfig& sc) {
  std::map<int, std::vector<std::pair<int, double>>> per_track;  // k -> [(n, d)]
  for (const DistRow& r : rows) {
    if (r.n < 0 || r.n >= (int)truth.agents.size())
      throw ConfigError("", "distance table references snapshot " + std::to_string(r.n) +
                                " beyond the known trajectory (" +
                                std::to_string(truth.agents.size()) + " positions)");
    per_track[r.track].push_back({r.n, r.d_m});
  }
  std::vector<int> ids;
  for (const auto& [k, obs] : per_track) ids.push_back(k);

  struct TrackFit {
    int k = 0;
    std::optional<FeatureFit> fit;
    std::vector<int> ns;  // observation snapshot ids (fit->inliers index these)
  };
  std::vector<TrackFit> fits(ids.size());
  parallel_chunks(ids.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const int k = ids[i];
      const auto& obs = per_track[k];
      std::vector<Vec3> agent;
      std::vector<double> dist;
      for (const auto& [n, d] : obs) {
        agent.push_back(truth.agents[n]);
        dist.push_back(d);
        fits[i].ns.push_back(n);
      }
      fits[i].k = k;
      if ((int)obs.size() >= 3) {
        RngStream rng = derive_stream(sc.seed, "feature", (std::uint64_t)(std::uint32_t)k);
        fits[i].fit = ransac_feature(agent, dist, sc, rng);
      }
    }
  });

  MapEstimate est;
  std::size_t total_obs = 0;
  double sse = 0.0;
  std::size_t m = 0;
  for (const TrackFit& tf : fits) {
    total_obs += tf.ns.size();
    if (!tf.fit) continue;
    est.features[tf.k] = tf.fit->pos;
    for (int idx : tf.fit->inliers) {
      const int n = tf.ns[idx];
      est.inliers.push_back({tf.k, n});
      const double r = per_track[tf.k][idx].second - (truth.agents[n] - tf.fit->pos).norm();
      sse += r * r;
      ++m;
    }
  }
  std::sort(est.inliers.begin(), est.inliers.end());
  std::set<int> used_n;
  for (const auto& [k, obs] : per_track)
    for (const auto& [n, d] : obs) used_n.insert(n);
  for (int n : used_n) est.agents[n] = truth.agents[n];
  est.inlier_ratio = total_obs ? (double)est.inliers.size() / (double)total_obs : 0.0;
  est.resid_std = m ? std::sqrt(sse / (double)m) : 0.0;
  est.segments_total = 0;
  est.segments_ok = 0;
  return est;
}

// Trajectory evaluation against truth on the snapshot ids both sides share.
EvalReport evaluate_trajectory(const MapEstimate& est, const TruthFile& truth) {
  std::vector<Vec3> e, t;
  for (const auto& [n, p] : est.agents)
    if (n >= 0 && n < (int)truth.agents.size()) {
      e.push_back(p);
      t.push_back(truth.agents[n]);
    }
  if (e.size() < 3)
    throw std::runtime_error("evaluate: fewer than 3 agent positions shared with truth");
  const RigidTransform tr = align_to_truth(e, t);
  EvalReport rep;
  double max_dev = 0.0, sse = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double dev = (tr.apply(e[i]) - t[i]).norm();
    max_dev = std::max(max_dev, dev);
    sse += dev * dev;
  }
  rep.rmse_m = std::sqrt(sse / (double)e.size());
  rep.max_dev_m = max_dev;
  rep.inlier_ratio = est.inlier_ratio;
  rep.resid_std_m = est.resid_std;
  return rep;
}

// Feature evaluation for the known-trajectory experiment: error of each
// estimated feature against the nearest true anchor.
EvalReport evaluate_features(const MapEstimate& est, const TruthFile& truth) {
  EvalReport rep;
  double sse = 0.0, max_dev = 0.0;
  std::size_t m = 0;
  for (const auto& [k, p] : est.features) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : truth.features) best = std::min(best, (p - q).norm());
    if (std::isfinite(best)) {
      sse += best * best;
      max_dev = std::max(max_dev, best);
      ++m;
    }
  }
  rep.rmse_m = m ? std::sqrt(sse / (double)m) : 0.0;
  rep.max_dev_m = max_dev;
  rep.inlier_ratio = est.inlier_ratio;
  rep.resid_std_m = est.resid_std;
  return rep;
}

}  // namespace

const std::string& current_stage() { return g_stage; }

void cmd_simulate(const RunConfig& cfg) {
  g_stage = "simulate";
  if (cfg.scenario.empty()) throw ConfigError("", "simulate requires --scenario");
  Scenario scn = load_scenario(cfg.scenario);
  if (!cfg.text.empty()) {
    const std::vector<Vec3> wp = letter_waypoints(cfg.text, cfg.area_m2);
    scn.traj = trajectory_from_waypoints(wp, cfg.path_step, scn.traj.dt_s);
    const double max_step = scn.rf.lambda_c() / 2;
    for (std::size_t i = 1; i < scn.traj.p.size(); ++i)
      if ((scn.traj.p[i] - scn.traj.p[i - 1]).norm() >= max_step)
        throw ConfigError("/trajectory",
                          "letter-path step must stay below half a carrier wavelength");
  }
  DmcParams dmc;
  dmc.alpha = cfg.dmc_alpha;
  dmc.beta = cfg.dmc_beta;
  dmc.tau_on_s = cfg.dmc_tau_on_ns * 1e-9;
  dmc.sigma_w = cfg.sigma_w;
  dmc.validate(scn.rf);

  const std::vector<Feature> features =
      enumerate_features(scn.pa, scn.surfaces, scn.flags.max_order);
  SynthesisOptions opt;
  opt.snr_db = cfg.snr_db;

  SynthTruth truth;
  SnapshotSeries series = synthesize(scn.traj, scn.pa, scn.surfaces, features, scn.pose, scn.rf,
                                     dmc, opt, cfg.seed, &truth);

  ensure_outdir(cfg);
  write_snapshots(cfg.outdir + "/snapshots.bin", series);

  TruthFile tf;
  tf.agents = truth.agent;
  tf.dt_s = scn.traj.dt_s;
  const int n_snap = (int)truth.agent.size();
  for (std::size_t l = 0; l < truth.features.size(); ++l) {
    tf.features.push_back(truth.features[l].pos);
    tf.feature_order.push_back(truth.features[l].order());
    std::vector<std::array<double, 4>> per_n((std::size_t)n_snap);
    for (int n = 0; n < n_snap; ++n) {
      const MpcParams& mu = truth.mu[n][l];
      per_n[n] = {mu.d, mu.az, mu.el, truth.vis[n][l] ? 1.0 : 0.0};
    }
    tf.params.push_back(std::move(per_n));
  }
  write_truth(cfg.outdir + "/truth.json", tf);
  std::cout << "simulate: wrote " << series.size() << " snapshots, " << truth.features.size()
            << " features (" << cfg.outdir << ")\n";
}

void cmd_track(const RunConfig& cfg) {
  g_stage = "track";
  const std::string snap_path = pick(cfg.snapshots, cfg.outdir, "snapshots.bin");
  const SnapshotSeries series = read_snapshots(snap_path);
  const FilterConfig fc = filter_config(cfg);
  const FilterRun run = run_filter(series, fc);
  ensure_outdir(cfg);
  write_distance_table(cfg.outdir + "/distance_table.csv", run.rows);
  write_track_archive(cfg.outdir + "/tracks.jsonl", run.tracks);
  if (cfg.dump_detections && series.size() > 0) {
    const InterpGrids grids = make_grids(series.rf, fc.grids);
    const std::vector<Detection> dets =
        detect_mpcs(series.rf, grids, series.y[0], fc.k_max, fc.beta_max);
    write_detections(cfg.outdir + "/detections.csv", dets);
  }
  std::cout << "track: " << run.tracks.size() << " tracks, " << run.rows.size()
            << " distance rows (" << cfg.outdir << ")\n";
}

void cmd_slam(const RunConfig& cfg) {
  g_stage = "slam";
  const std::string table_path = pick(cfg.table, cfg.outdir, "distance_table.csv");
  const std::vector<DistRow> rows = read_distance_table(table_path);
  const SlamConfig sc = slam_config(cfg);

  MapEstimate est;
  bool known = !cfg.known_positions.empty();
  std::optional<TruthFile> truth;
  if (known) {
    truth = read_truth(cfg.known_positions);  // missing file -> explicit error
    est = map_known_positions(rows, *truth, sc);
  } else {
    est = slam_segmented(rows, sc);
    for (const std::string& e : est.segment_errors)
      std::cerr << "slam: segment skipped: " << e << "\n";
  }
  ensure_outdir(cfg);
  write_map_estimate(cfg.outdir + "/map.json", est);

  if (!known) {
    const std::string truth_path = pick(cfg.truth, cfg.outdir, "truth.json");
    if (std::filesystem::exists(truth_path)) truth = read_truth(truth_path);
  }
  if (truth) {
    const EvalReport rep = known ? evaluate_features(est, *truth) : evaluate_trajectory(est, *truth);
    write_report(cfg.outdir + "/report.json", rep);
    std::cout << "slam: rmse " << rep.rmse_m << " m, max dev " << rep.max_dev_m
              << " m, inlier ratio " << rep.inlier_ratio << ", resid std " << rep.resid_std_m
              << " m\n";
  } else {
    std::cout << "slam: inlier ratio " << est.inlier_ratio << ", resid std " << est.resid_std
              << " m (no truth file; report skipped)\n";
  }
}

void cmd_plot(const RunConfig& cfg) {
  g_stage = "plot";
  const std::string table_path = pick(cfg.table, cfg.outdir, "distance_table.csv");
  const std::string map_path = pick(cfg.map, cfg.outdir, "map.json");
  const std::string truth_path = pick(cfg.truth, cfg.outdir, "truth.json");
  ensure_outdir(cfg);
  bool any = false;

  if (std::filesystem::exists(table_path)) {
    plot_track_distances(cfg.outdir + "/distances.svg", read_distance_table(table_path));
    any = true;
  }
  if (std::filesystem::exists(map_path)) {
    const MapEstimate est = read_map_estimate(map_path);
    std::optional<TruthFile> truth;
    if (std::filesystem::exists(truth_path)) truth = read_truth(truth_path);

    std::vector<Vec3> agents;
    for (const auto& [n, p] : est.agents) agents.push_back(p);

    plot_feature_map(cfg.outdir + "/features.svg", est.features,
                     truth ? truth->features : std::vector<Vec3>{}, agents);

    std::vector<Vec3> est_traj = agents, truth_traj;
    if (truth) {
      // Overlay in the truth frame when an alignment is well-posed.
      std::vector<Vec3> e, t;
      for (const auto& [n, p] : est.agents)
        if (n >= 0 && n < (int)truth->agents.size()) {
          e.push_back(p);
          t.push_back(truth->agents[n]);
        }
      truth_traj = truth->agents;
      if (e.size() >= 3) {
        try {
          const RigidTransform tr = align_to_truth(e, t);
          for (Vec3& p : est_traj) p = tr.apply(p);
        } catch (const std::exception&) {
          // Fall back to the raw frame overlay.
        }
      }
    }
    plot_trajectory(cfg.outdir + "/trajectory.svg", est_traj, truth_traj);
    any = true;
  }
  if (!any)
    throw ConfigError("", "plot: no inputs found (looked for " + table_path + " and " + map_path +
                              ")");
  std::cout << "plot: wrote SVG files (" << cfg.outdir << ")\n";
}

void cmd_run_all(const RunConfig& cfg) {
  g_stage = "run-all";
  RunConfig rc = cfg;
  if (!cfg.manifest.empty()) {
    std::ifstream in(cfg.manifest);
    if (!in) throw ConfigError("", "cannot open manifest: " + cfg.manifest);
    std::ostringstream ss;
    ss << in.rdbuf();
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("", cfg.manifest + ": JSON parse error: " + ex.what());
    }
    for (const auto& [key, val] : doc.items()) {
      try {
        if (key == "scenario") rc.scenario = val.get<std::string>();
        else if (key == "outdir") { if (!cfg.outdir_set) rc.outdir = val.get<std::string>(); }
        else if (key == "seed") rc.seed = val.get<std::uint64_t>();
        else if (key == "text") rc.text = val.get<std::string>();
        else if (key == "area-m2") rc.area_m2 = val.get<double>();
        else if (key == "path-step") rc.path_step = val.get<double>();
        else if (key == "snr-db") rc.snr_db = val.get<double>();
        else if (key == "sigma-w") rc.sigma_w = val.get<double>();
        else if (key == "dmc-alpha") rc.dmc_alpha = val.get<double>();
        else if (key == "dmc-beta") rc.dmc_beta = val.get<double>();
        else if (key == "dmc-tau-on-ns") rc.dmc_tau_on_ns = val.get<double>();
        else if (key == "k-max") rc.k_max = val.get<int>();
        else if (key == "beta-max") rc.beta_max = val.get<double>();
        else if (key == "eps-birth-db") rc.eps_birth_db = val.get<double>();
        else if (key == "eps-death-db") rc.eps_death_db = val.get<double>();
        else if (key == "rho-birth") rc.rho_birth = val.get<double>();
        else if (key == "q-d") rc.q_d = val.get<double>();
        else if (key == "q-az") rc.q_az = val.get<double>();
        else if (key == "q-el") rc.q_el = val.get<double>();
        else if (key == "q-alpha") rc.q_alpha = val.get<double>();
        else if (key == "q-phi") rc.q_phi = val.get<double>();
        else if (key == "rate-std-d") rc.rate_std_d = val.get<double>();
        else if (key == "rate-std-ang") rc.rate_std_ang = val.get<double>();
        else if (key == "birth-stride") rc.birth_stride = val.get<int>();
        else if (key == "grid-az") rc.grid_az = val.get<int>();
        else if (key == "grid-el") rc.grid_el = val.get<int>();
        else if (key == "grid-az-min-deg") rc.grid_az_min_deg = val.get<double>();
        else if (key == "grid-az-max-deg") rc.grid_az_max_deg = val.get<double>();
        else if (key == "grid-el-min-deg") rc.grid_el_min_deg = val.get<double>();
        else if (key == "grid-el-max-deg") rc.grid_el_max_deg = val.get<double>();
        else if (key == "nf-mult") rc.nf_mult = val.get<int>();
        else if (key == "dump-detections") rc.dump_detections = val.get<bool>();
        else if (key == "sigma-inl") rc.sigma_inl = val.get<double>();
        else if (key == "confidence") rc.confidence = val.get<double>();
        else if (key == "outlier-prior") rc.outlier_prior = val.get<double>();
        else if (key == "seg-len") rc.seg_len = val.get<int>();
        else if (key == "seg-overlap") rc.seg_overlap = val.get<int>();
        else if (key == "pa-track") rc.pa_track = val.get<int>();
        else if (key == "seg-starts") rc.seg_starts = val.get<int>();
        else if (key == "slam-seed") rc.slam_seed = val.get<std::uint64_t>();
        else if (key == "known-positions") rc.known_positions = val.get<std::string>();
        else throw ConfigError("/" + key, "unknown manifest key");
      } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("/" + key, std::string("bad manifest value: ") + ex.what());
      }
    }
  }
  if (rc.scenario.empty())
    throw ConfigError("", "run-all requires a scenario (flag --scenario or manifest key)");
  // Stage paths always flow through the run's own output directory.
  rc.snapshots.clear();
  rc.table.clear();
  rc.map.clear();
  rc.truth.clear();
  cmd_simulate(rc);
  cmd_track(rc);
  cmd_slam(rc);
  cmd_plot(rc);
  g_stage = "run-all";
  std::cout << "run-all: pipeline complete (" << rc.outdir << ")\n";
}

}  // namespace mpslam
