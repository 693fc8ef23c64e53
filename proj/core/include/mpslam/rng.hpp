#pragma once
// Deterministic seeded random streams.
//
// Every stochastic quantity in the pipeline draws from a stream derived from
// (master seed, purpose tag, index) so that runs are reproducible regardless
// of evaluation order or thread count.

#include <cstdint>
#include <random>
#include <string_view>

#include "mpslam/types.hpp"

namespace mpslam {

// SplitMix64 finalizer; good avalanche for seed mixing.
std::uint64_t mix64(std::uint64_t x);

// Stable 64-bit FNV-1a hash of a tag string.
std::uint64_t hash_tag(std::string_view tag);

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : eng_(seed) {}

  std::mt19937_64& engine() { return eng_; }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(eng_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  double gauss() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
  // Circular complex normal with E|z|^2 = 1.
  cd cgauss() { return cd(gauss(), gauss()) * (1.0 / std::sqrt(2.0)); }

 private:
  std::mt19937_64 eng_;
};

// Derive an independent stream for (seed, tag, id).
RngStream derive_stream(std::uint64_t seed, std::string_view tag, std::uint64_t id);

}  // namespace mpslam
