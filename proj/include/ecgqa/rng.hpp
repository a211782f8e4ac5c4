#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace ecgqa {

/// SplitMix64 finalizer. Used to turn structured seed tuples into engine seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Combines seed components (global seed, item hash, step, ...) into one seed.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

/// FNV-1a 64 over the bytes of `text`.
std::uint64_t hash_text(std::string_view text);

/// Seeded generator used everywhere randomness enters the pipeline.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are not portable, so uniform, normal
/// and bounded-integer draws are derived here from the raw 64-bit stream:
///   uniform()  = (x >> 11) * 2^-53
///   normal()   = Box-Muller on two uniforms (second value cached)
///   below(n)   = rejection sampling on the raw stream (unbiased)
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next() { return engine_(); }
  double uniform();
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ecgqa
