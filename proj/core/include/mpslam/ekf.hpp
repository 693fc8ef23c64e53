#pragma once
// Phase-coherent extended Kalman filter over multipath components.
//
// Per tracked component the state holds 14 entries:
//   [d, az, el, vd, vaz, vel, aHH, aHV, aVH, aVV, pHH, pHV, pVH, pVV]
// stacked slot-major across tracks (all distances first, then all azimuths,
// ...), so the transition factorizes as F = F1 (x) I_K. Structural states
// follow a constant-velocity model; weight magnitudes and polarimetric
// phases are random walks with no rate states — all snapshot-to-snapshot
// carrier phase motion is absorbed through d's frequency response, which is
// what makes sub-wavelength distance tracking work.
//
// The measurement update runs in information form:
//   q = 2 Re{J^H R^-1 nu},  D = 2 Re{J^H R^-1 J},
//   P+ = (I + P- D)^-1 P- (symmetrized),  dx = P+ q.

#include <optional>
#include <vector>

#include "mpslam/sage.hpp"
#include "mpslam/signal.hpp"
#include "mpslam/types.hpp"

namespace mpslam {

// Slot indices within one track's 14-entry block.
enum StateSlot : int {
  kSlotD = 0, kSlotAz = 1, kSlotEl = 2,
  kSlotVd = 3, kSlotVaz = 4, kSlotVel = 5,
  kSlotA0 = 6,   // 4 weight magnitudes, HH..VV
  kSlotP0 = 10,  // 4 polarimetric phases, HH..VV
};
inline constexpr int kSlots = 14;

struct FilterConfig {
  int k_max = 30;
  double beta_max = 0.95;
  double eps_death_db = 0.0;   // track dies when SINR falls below this
  double eps_birth_db = 3.0;   // candidate must exceed this to be born
  double rho_birth = 2.0;      // birth weight-covariance inflation
  // continuous acceleration PSDs driving the structural constant-velocity
  // model (units: coord^2 / s^4 when coupled with the dt^4/dt^3/dt^2 blocks)
  double q_d = 0.05;
  double q_az = 0.05;
  double q_el = 0.02;
  // per-snapshot random-walk variances of weight magnitudes and phases
  double q_alpha = 1e-4;
  double q_phi = 1e-4;
  // birth rate priors (std of the unknown initial rates)
  double rate_std_d = 0.3;     // m/s
  double rate_std_ang = 0.1;   // rad/s
  int birth_stride = 1;        // run the residual birth scan every this many snapshots
  GridSpec grids;              // birth/init search grids
};

struct Track {
  int id = 0;
  int birth_n = 0;
  double odo_m = 0.0;          // accumulated |vd| dt since last weight reinit
  double sinr_db = 0.0;        // latest SINR
  double sinr_sum_db = 0.0;    // for the archive mean
  int sinr_count = 0;
};

struct FilterState {
  std::vector<Track> tracks;
  VecX x;  // 14K
  MatX P;  // 14K x 14K

  int K() const { return static_cast<int>(tracks.size()); }
  int dim() const { return kSlots * K(); }
  int idx(int slot, int k) const { return slot * K() + k; }

  MpcParams mu(int k) const {
    return {x(idx(kSlotD, k)), x(idx(kSlotAz, k)), x(idx(kSlotEl, k))};
  }
  PolWeights gamma(int k) const {
    PolWeights g;
    for (int p = 0; p < 4; ++p)
      g(p) = std::polar(x(idx(kSlotA0 + p, k)), x(idx(kSlotP0 + p, k)));
    return g;
  }
};

// Dense transition and process-noise matrices for K tracks (F = F1 (x) I_K).
MatX make_transition(int K, double dt);
MatX make_process_noise(int K, double dt, const FilterConfig& cfg);

// Constant-velocity prediction: x <- F x, P <- F P F^T + Q.
void ekf_predict(FilterState& st, double dt, const FilterConfig& cfg);

// Sum of all tracked components' signals.
VecXc ekf_signal(const RfConfig& rf, const FilterState& st);

// Complex measurement Jacobian, N x 14K. Rate columns are zero; there are no
// phase-rate states (phase lock rule).
MatXc ekf_jacobian(const RfConfig& rf, const FilterState& st);

// Information-form measurement update. Throws on non-finite innovation.
// Angles are re-wrapped and d clamped into (0, delay window) afterwards.
void ekf_update(FilterState& st, const RfConfig& rf, const VecXc& y, const NoiseCovariance& R);

// SINR (dB, clamped to +-300) of track k: sum_p alpha_p^2 / var(alpha_p)
// with the variances read from P's weight-magnitude diagonal.
double track_sinr_db(const FilterState& st, int k);

struct DeathRecord {
  Track track;
  int death_n = 0;
};

// Remove tracks whose SINR is below eps_death_db; returns the removals.
std::vector<DeathRecord> ekf_prune(FilterState& st, double eps_death_db, int n);

// Detect new components in the tracking residual and append the gated ones.
// Energy accounting runs against |y|^2 including already-tracked components.
// Returns the number of tracks born.
int ekf_birth(FilterState& st, const RfConfig& rf, const InterpGrids& grids, const VecXc& y,
              const NoiseCovariance& R, const FilterConfig& cfg, int n, int* next_id);

// Re-estimate the polarimetric weights of any track whose accumulated radial
// motion since the last reinit exceeds one carrier wavelength; resets the
// weight covariance block from the WLS error covariance.
void ekf_reinit_weights(FilterState& st, const RfConfig& rf, const VecXc& y,
                        const NoiseCovariance& R);

// One row of the distance/angle/SINR table handed to the SLAM stage.
struct DistRow {
  int n = 0;
  int track = 0;
  double d_m = 0.0, az_rad = 0.0, el_rad = 0.0, sinr_db = 0.0;
};

struct TrackRecord {
  int id = 0;
  int birth_n = 0;
  int death_n = -1;  // -1: alive at the end
  double mean_sinr_db = 0.0;
};

struct FilterRun {
  std::vector<DistRow> rows;
  std::vector<TrackRecord> tracks;
  std::vector<DmcParams> dmc;  // per snapshot
};

// Full pipeline over a snapshot series: joint detection + refinement on the
// first snapshot, then per snapshot predict -> update -> (DMC re-estimate
// from the residual) -> birth -> prune -> weight-reinit bookkeeping -> row
// emission. Deterministic.
FilterRun run_filter(const SnapshotSeries& series, const FilterConfig& cfg);

}  // namespace mpslam
