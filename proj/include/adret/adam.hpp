#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adret/encoder.hpp"
#include "adret/matrix.hpp"

namespace adret {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed list of named tensors.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::span<const NamedTensor> params, AdamConfig cfg = {});

  // Throws DivergenceError naming the tensor if any gradient is non-finite;
  // nothing is updated in that case.
  void step(std::span<const NamedTensor> params, std::span<const NamedTensor> grads, double lr);

  std::size_t steps() const noexcept { return step_; }
  const std::vector<Matrix>& first_moment() const noexcept { return m_; }
  const std::vector<Matrix>& second_moment() const noexcept { return v_; }

 private:
  AdamConfig cfg_;
  std::size_t step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace adret
