#pragma once
// Subcommand implementations behind the mpc-slam binary, kept as library
// functions so integration tests can drive them in-process. Each function
// throws ConfigError / std::invalid_argument for configuration problems and
// std::runtime_error for numerical failures; main() maps those to exit codes
// 2 and 3 with the active stage name.

#include <cstdint>
#include <string>

namespace mpslam {

struct RunConfig {
  // paths
  std::string scenario;         // scenario JSON (simulate / run-all)
  std::string outdir = "out";   // artifact directory
  std::string snapshots;        // default <outdir>/snapshots.bin
  std::string table;            // default <outdir>/distance_table.csv
  std::string map;              // default <outdir>/map.json
  std::string truth;            // default <outdir>/truth.json
  std::string known_positions;  // truth file; selects known-trajectory mapping
  std::string manifest;         // pipeline manifest (run-all)

  // simulate
  std::uint64_t seed = 1;
  std::string text;             // letter-path trajectory override
  double area_m2 = 2.0;         // bounding-box area of the letter path
  double path_step = 0.004;     // arc-length step of the letter path, m
  double snr_db = 25.0;         // LOS SNR against white noise
  double sigma_w = 1.0;         // white noise std per complex sample
  double dmc_alpha = 30.0;      // diffuse power scale
  double dmc_beta = 0.5;        // diffuse decay per delay bin
  double dmc_tau_on_ns = 0.0;   // diffuse onset delay, ns

  // track (filter)
  int k_max = 30;
  double beta_max = 0.95;
  double eps_birth_db = 3.0;
  double eps_death_db = 0.0;
  double rho_birth = 2.0;
  double q_d = 0.05;
  double q_az = 0.05;
  double q_el = 0.02;
  double q_alpha = 1e-4;
  double q_phi = 1e-4;
  double rate_std_d = 0.3;
  double rate_std_ang = 0.1;
  int birth_stride = 1;          // residual birth scan every this many snapshots
  int grid_az = 360;             // azimuth grid size of the detection scan
  int grid_el = 90;              // elevation grid size of the detection scan
  double grid_az_min_deg = -90.0, grid_az_max_deg = 90.0;  // azimuth scan range
  double grid_el_min_deg = -90.0, grid_el_max_deg = 90.0;  // elevation scan range
  int nf_mult = 8;               // delay-grid oversampling factor
  bool dump_detections = false;  // also write the first-snapshot detection CSV

  // slam
  double sigma_inl = 0.046;
  double confidence = 0.999;
  double outlier_prior = 0.25;
  int seg_len = 100;
  int seg_overlap = 50;
  int pa_track = -1;
  int seg_starts = 8;
  std::uint64_t slam_seed = 1234;

  bool outdir_set = false;  // true when --out was given explicitly
};

// Name of the pipeline stage currently executing (for error reporting).
const std::string& current_stage();

void cmd_simulate(const RunConfig& cfg);
void cmd_track(const RunConfig& cfg);
void cmd_slam(const RunConfig& cfg);
void cmd_plot(const RunConfig& cfg);
void cmd_run_all(const RunConfig& cfg);

}  // namespace mpslam
