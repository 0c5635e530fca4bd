#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>

namespace ssnt {

// Counter-based 64-bit generator: the k-th output of stream (seed, stream) is
// a fixed mix of (key, k), so any draw can be reproduced from its coordinates
// and substreams never overlap.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  // Uniform integer in [lo, hi].
  std::size_t between(std::size_t lo, std::size_t hi);
  bool bernoulli(double p);

  // Independent child stream keyed by (this stream, id). Does not depend on
  // or advance the counter.
  Rng split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ssnt
