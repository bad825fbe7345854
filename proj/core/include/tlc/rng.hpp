#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tlc {

/// Seedable generator with named sub-streams.
///
/// `split("env")` and `split("explore")` derive statistically independent
/// children from the same master seed, so drawing more exploration noise never
/// shifts the arrival sequence. Splitting is a pure function of (seed, path):
/// the parent is not advanced.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::string_view name) const;

  std::uint64_t seed() const { return seed_; }

  result_type operator()() { return engine_(); }
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }

  /// Uniform on [0, 1).
  double uniform();
  /// Uniform integer on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p);
  double normal();

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace tlc
