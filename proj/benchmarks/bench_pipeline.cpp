// Microbenchmarks for the per-snapshot hot path (signal synthesis, noise
// whitening, grid detection, DMC estimation) and the RANSAC mapping stage.
#include <benchmark/benchmark.h>

#include <mpslam/rng.hpp>
#include <mpslam/sage.hpp>
#include <mpslam/scenario.hpp>
#include <mpslam/signal.hpp>
#include <mpslam/slam.hpp>

namespace {

using namespace mpslam;

RfConfig bench_rf() {
  RfConfig rf;
  rf.fc_hz = 2.6e9;
  rf.bw_hz = 4.0e8;
  rf.nf = 41;
  rf.elements_wl = array_elements(9, 0.5);
  return rf;
}

DmcParams bench_dmc() {
  DmcParams dmc;
  dmc.alpha = 30.0;
  dmc.beta = 0.5;
  dmc.tau_on_s = 0.0;
  dmc.sigma_w = 1.0;
  return dmc;
}

GridSpec bench_grid_spec() {
  GridSpec gs;
  gs.n_az = 180;
  gs.n_el = 9;
  gs.az_min = -kPi;
  gs.az_max = kPi;
  gs.el_min = -20.0 * kPi / 180.0;
  gs.el_max = 20.0 * kPi / 180.0;
  gs.nf_prime_mult = 4;
  return gs;
}

// Three well separated paths plus DMC + white noise.
VecXc bench_snapshot(const RfConfig& rf, const DmcParams& dmc) {
  RngStream rng(20260822);
  VecXc y = VecXc::Zero(rf.dim());
  const MpcParams mus[3] = {{5.2, 0.4, 0.05}, {8.4, -1.1, 0.02}, {12.1, 2.0, -0.04}};
  const double mags[3] = {30.0, 12.0, 6.0};
  for (int i = 0; i < 3; ++i) {
    PolWeights g;
    for (int p = 0; p < 4; ++p) g(p) = mags[i] * rng.cgauss();
    y += mpc_signal(rf, mus[i], g);
  }
  NoiseCovariance R(rf, dmc);
  y += R.sample(rng);
  return y;
}

void BM_MpcMatrix(benchmark::State& state) {
  const RfConfig rf = bench_rf();
  const MpcParams mu{5.2, 0.4, 0.05};
  for (auto _ : state) benchmark::DoNotOptimize(mpc_matrix(rf, mu));
}
BENCHMARK(BM_MpcMatrix);

void BM_MpcSignal(benchmark::State& state) {
  const RfConfig rf = bench_rf();
  const MpcParams mu{5.2, 0.4, 0.05};
  PolWeights g;
  g << cd(3.0, 1.0), cd(0.4, -0.2), cd(-0.3, 0.6), cd(1.2, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(mpc_signal(rf, mu, g));
}
BENCHMARK(BM_MpcSignal);

void BM_CovarianceSolve(benchmark::State& state) {
  const RfConfig rf = bench_rf();
  const NoiseCovariance R(rf, bench_dmc());
  RngStream rng(7);
  VecXc v(rf.dim());
  for (int i = 0; i < rf.dim(); ++i) v(i) = rng.cgauss();
  for (auto _ : state) benchmark::DoNotOptimize(R.solve(v));
}
BENCHMARK(BM_CovarianceSolve);

void BM_CovarianceWhitenedDot(benchmark::State& state) {
  const RfConfig rf = bench_rf();
  const NoiseCovariance R(rf, bench_dmc());
  RngStream rng(7);
  VecXc a(rf.dim()), b(rf.dim());
  for (int i = 0; i < rf.dim(); ++i) {
    a(i) = rng.cgauss();
    b(i) = rng.cgauss();
  }
  for (auto _ : state) benchmark::DoNotOptimize(R.whitened_dot(a, b));
}
BENCHMARK(BM_CovarianceWhitenedDot);

void BM_PeakSearch(benchmark::State& state) {
  const RfConfig rf = bench_rf();
  const InterpGrids g = make_grids(rf, bench_grid_spec());
  const VecXc y = bench_snapshot(rf, bench_dmc());
  for (auto _ : state) benchmark::DoNotOptimize(peak_search(rf, g, y));
}
BENCHMARK(BM_PeakSearch);

void BM_DetectMpcs(benchmark::State& state) {
  const RfConfig rf = bench_rf();
  const InterpGrids g = make_grids(rf, bench_grid_spec());
  const DmcParams dmc = bench_dmc();
  const NoiseCovariance R(rf, dmc);
  const VecXc y = bench_snapshot(rf, dmc);
  for (auto _ : state) benchmark::DoNotOptimize(detect_mpcs(rf, g, y, 5, 0.995, &R));
}
BENCHMARK(BM_DetectMpcs);

void BM_EstimateDmc(benchmark::State& state) {
  const RfConfig rf = bench_rf();
  const DmcParams dmc = bench_dmc();
  RngStream rng(11);
  const NoiseCovariance R(rf, dmc);
  const VecXc resid = R.sample(rng);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_dmc(rf, resid));
}
BENCHMARK(BM_EstimateDmc);

void BM_RansacFeature(benchmark::State& state) {
  SlamConfig cfg;
  const Vec3 feat(3.6, 4.3, 0.0);
  std::vector<Vec3> agents;
  std::vector<double> dist;
  RngStream noise(3);
  for (int i = 0; i < 100; ++i) {
    const double t = 0.012 * i;
    const Vec3 p(-1.3 + t, 0.4 + 0.5 * t * t, 0.0);
    agents.push_back(p);
    // 25% outliers, the rest perturbed at the centimeter scale
    const bool outlier = (i % 4) == 3;
    dist.push_back((p - feat).norm() + (outlier ? 1.5 : 0.01 * noise.gauss()));
  }
  for (auto _ : state) {
    RngStream rng(77);
    benchmark::DoNotOptimize(ransac_feature(agents, dist, cfg, rng));
  }
}
BENCHMARK(BM_RansacFeature);

}  // namespace

BENCHMARK_MAIN();
