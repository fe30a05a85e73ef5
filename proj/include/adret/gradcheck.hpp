#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "adret/matrix.hpp"

namespace adret {

// A differentiable operation expressed as forward + vector-Jacobian product.
struct DiffOp {
  using Forward = std::function<Matrix(std::span<const Matrix> inputs)>;
  using Vjp = std::function<std::vector<Matrix>(std::span<const Matrix> inputs,
                                                const Matrix& output, const Matrix& upstream)>;
  std::string name;
  Forward forward;
  Vjp vjp;
};

struct GradCheckReport {
  std::string op;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

inline constexpr double kFiniteDiffStep = 1e-5;

// Compares the analytic VJP against central differences of <upstream, forward(x)>
// for a random upstream drawn from `seed`. The per-entry error is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckReport finite_diff_check(const DiffOp& op, std::vector<Matrix> inputs, double tolerance,
                                  std::uint64_t seed = 0, double step = kFiniteDiffStep);

}  // namespace adret
