#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "adret/matrix.hpp"

namespace adret {

// Deterministic generator built on std::mt19937_64, whose output sequence is
// fixed by the C++ standard. Distributions are implemented here rather than
// taken from <random> because the standard leaves their algorithms to the
// library vendor:
//   uniform()      -> top 53 bits of one draw, scaled to [0, 1)
//   below(n)       -> rejection sampling on the raw 64-bit draw
//   normal()       -> Box-Muller, both outputs used in turn
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t below(std::size_t n);
  // Inclusive on both ends.
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
  double normal();

  Matrix normal_matrix(std::size_t rows, std::size_t cols, double scale = 1.0);
  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace adret
