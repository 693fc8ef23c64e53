#include "mpslam/rng.hpp"

namespace mpslam {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

RngStream derive_stream(std::uint64_t seed, std::string_view tag, std::uint64_t id) {
  std::uint64_t s = mix64(seed ^ mix64(hash_tag(tag)) ^ mix64(id * 0x9E3779B97F4A7C15ull + 1));
  return RngStream(s);
}

}  // namespace mpslam
