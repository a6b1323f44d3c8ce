#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace lgcp {

// Philox4x32-10 counter-based generator. A (seed, stream) pair fixes the key
// and the upper counter words, so streams never overlap and draws are
// reproducible on any platform. Distributions are implemented here rather
// than through <random> because the standard distributions are not specified
// bit-for-bit.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double exponential();
  std::uint64_t poisson(double mean);

  // Independent generator sharing this seed, on a different stream.
  Rng split(std::uint64_t stream) const { return Rng(seed_, stream); }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// Derives a per-item seed from a master seed; used to give every posterior
// draw its own stream independent of thread scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace lgcp
