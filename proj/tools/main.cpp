#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "mpslam/scenario.hpp"

namespace {

using mpslam::RunConfig;

void add_common(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--out", cfg.outdir, "Output directory for pipeline artifacts")
      ->capture_default_str()
      ->each([&cfg](const std::string&) { cfg.outdir_set = true; });
}

void add_filter_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--k-max", cfg.k_max, "Maximum number of tracked paths")->capture_default_str();
  sub->add_option("--beta-max", cfg.beta_max, "Captured-energy fraction stopping the detector")
      ->capture_default_str();
  sub->add_option("--eps-birth-db", cfg.eps_birth_db, "SINR gate for new tracks (dB)")
      ->capture_default_str();
  sub->add_option("--eps-death-db", cfg.eps_death_db, "SINR floor below which tracks die (dB)")
      ->capture_default_str();
  sub->add_option("--rho-birth", cfg.rho_birth, "Weight-covariance inflation at birth")
      ->capture_default_str();
  sub->add_option("--q-d", cfg.q_d, "Distance acceleration PSD")->capture_default_str();
  sub->add_option("--q-az", cfg.q_az, "Azimuth acceleration PSD")->capture_default_str();
  sub->add_option("--q-el", cfg.q_el, "Elevation acceleration PSD")->capture_default_str();
  sub->add_option("--q-alpha", cfg.q_alpha, "Weight-magnitude random-walk variance")
      ->capture_default_str();
  sub->add_option("--q-phi", cfg.q_phi, "Weight-phase random-walk variance")
      ->capture_default_str();
  sub->add_option("--rate-std-d", cfg.rate_std_d, "Prior std of the initial distance rate (m/s)")
      ->capture_default_str();
  sub->add_option("--rate-std-ang", cfg.rate_std_ang,
                  "Prior std of the initial angle rates (rad/s)")
      ->capture_default_str();
  sub->add_option("--birth-stride", cfg.birth_stride,
                  "Run the residual birth scan every this many snapshots")
      ->capture_default_str();
  sub->add_option("--grid-az", cfg.grid_az, "Azimuth grid size of the detection scan")
      ->capture_default_str();
  sub->add_option("--grid-el", cfg.grid_el, "Elevation grid size of the detection scan")
      ->capture_default_str();
  sub->add_option("--grid-az-min-deg", cfg.grid_az_min_deg, "Azimuth scan lower bound (deg)")
      ->capture_default_str();
  sub->add_option("--grid-az-max-deg", cfg.grid_az_max_deg, "Azimuth scan upper bound (deg)")
      ->capture_default_str();
  sub->add_option("--grid-el-min-deg", cfg.grid_el_min_deg, "Elevation scan lower bound (deg)")
      ->capture_default_str();
  sub->add_option("--grid-el-max-deg", cfg.grid_el_max_deg, "Elevation scan upper bound (deg)")
      ->capture_default_str();
  sub->add_option("--nf-mult", cfg.nf_mult, "Delay-grid oversampling factor")
      ->capture_default_str();
  sub->add_flag("--dump-detections", cfg.dump_detections,
                "Also write the first-snapshot detection list CSV");
}

void add_slam_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--sigma-inl", cfg.sigma_inl, "Inlier residual std (m); threshold is 3 sigma")
      ->capture_default_str();
  sub->add_option("--confidence", cfg.confidence, "RANSAC success confidence")
      ->capture_default_str();
  sub->add_option("--outlier-prior", cfg.outlier_prior, "Assumed outlier fraction")
      ->capture_default_str();
  sub->add_option("--seg-len", cfg.seg_len, "Segment window length (snapshots)")
      ->capture_default_str();
  sub->add_option("--seg-overlap", cfg.seg_overlap, "Overlap between consecutive windows")
      ->capture_default_str();
  sub->add_option("--pa-track", cfg.pa_track, "Anchor track id (-1 = auto by max support)")
      ->capture_default_str();
  sub->add_option("--seg-starts", cfg.seg_starts, "Multi-starts of the minimal window solver")
      ->capture_default_str();
  sub->add_option("--slam-seed", cfg.slam_seed, "RANSAC sampling seed")->capture_default_str();
}

void add_simulate_flags(CLI::App* sub, RunConfig& cfg, bool seed_required) {
  sub->add_option("--scenario", cfg.scenario, "Scenario JSON file");
  auto* seed = sub->add_option("--seed", cfg.seed, "Synthesis seed")->capture_default_str();
  if (seed_required) seed->required();
  sub->add_option("--text", cfg.text, "Override the trajectory with this text's letter path");
  sub->add_option("--area", cfg.area_m2, "Letter-path bounding-box area (m^2)")
      ->capture_default_str();
  sub->add_option("--path-step", cfg.path_step, "Letter-path arc-length step (m)")
      ->capture_default_str();
  sub->add_option("--snr-db", cfg.snr_db, "Line-of-sight SNR against white noise (dB)")
      ->capture_default_str();
  sub->add_option("--sigma-w", cfg.sigma_w, "White noise std per complex sample")
      ->capture_default_str();
  sub->add_option("--dmc-alpha", cfg.dmc_alpha, "Diffuse multipath power scale")
      ->capture_default_str();
  sub->add_option("--dmc-beta", cfg.dmc_beta, "Diffuse decay rate per delay bin")
      ->capture_default_str();
  sub->add_option("--dmc-tau-on-ns", cfg.dmc_tau_on_ns, "Diffuse onset delay (ns)")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{
      "mpc-slam: synthetic multipath channel simulation, phase-coherent path tracking,\n"
      "and distance-only localization/mapping.\n"
      "Environment: MPC_SLAM_THREADS caps internal parallelism (0 or unset = auto)."};
  app.require_subcommand(1);

  CLI::App* sim = app.add_subcommand("simulate", "Synthesize a snapshot series from a scenario");
  add_common(sim, cfg);
  add_simulate_flags(sim, cfg, /*seed_required=*/true);
  sim->callback([&] { mpslam::cmd_simulate(cfg); });

  CLI::App* trk = app.add_subcommand("track", "Detect and track paths through the snapshots");
  add_common(trk, cfg);
  trk->add_option("--snapshots", cfg.snapshots, "Snapshot file (default <out>/snapshots.bin)");
  add_filter_flags(trk, cfg);
  trk->callback([&] { mpslam::cmd_track(cfg); });

  CLI::App* slm = app.add_subcommand("slam", "Map features (and the trajectory) from distances");
  add_common(slm, cfg);
  slm->add_option("--table", cfg.table, "Distance table CSV (default <out>/distance_table.csv)");
  slm->add_option("--truth", cfg.truth, "Truth file for evaluation (default <out>/truth.json)");
  slm->add_option("--known-positions", cfg.known_positions,
                  "Truth file providing agent positions; enables the known-trajectory mode");
  add_slam_flags(slm, cfg);
  slm->callback([&] { mpslam::cmd_slam(cfg); });

  CLI::App* plt = app.add_subcommand("plot", "Render SVG figures from existing artifacts");
  add_common(plt, cfg);
  plt->add_option("--table", cfg.table, "Distance table CSV (default <out>/distance_table.csv)");
  plt->add_option("--map", cfg.map, "Map estimate JSON (default <out>/map.json)");
  plt->add_option("--truth", cfg.truth, "Truth file overlay (default <out>/truth.json)");
  plt->callback([&] { mpslam::cmd_plot(cfg); });

  CLI::App* all = app.add_subcommand("run-all", "simulate -> track -> slam -> plot in one run");
  add_common(all, cfg);
  all->add_option("--manifest", cfg.manifest, "Pipeline manifest JSON (overrides other flags)");
  add_simulate_flags(all, cfg, /*seed_required=*/false);
  add_filter_flags(all, cfg);
  add_slam_flags(all, cfg);
  all->add_option("--known-positions", cfg.known_positions,
                  "Truth file providing agent positions; enables the known-trajectory mode");
  all->callback([&] { mpslam::cmd_run_all(cfg); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  } catch (const mpslam::ConfigError& e) {
    std::cerr << "mpc-slam: " << mpslam::current_stage() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "mpc-slam: " << mpslam::current_stage() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "mpc-slam: " << mpslam::current_stage() << ": numerical failure: " << e.what()
              << "\n";
    return 3;
  }
  return 0;
}
