#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace npmle {

// Philox4x32-10 counter-based generator. The stream id occupies the high
// half of the counter, so (seed, stream) pairs give independent sequences
// regardless of which thread consumes them.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  double normal();
  std::int64_t poisson(double lambda);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// Mixes a base seed with cell coordinates (splitmix64 finalizer chain).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace npmle
