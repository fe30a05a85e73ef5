#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adret/gradcheck.hpp"

namespace adret {

struct GradientInstance {
  DiffOp op;
  std::vector<Matrix> inputs;
};

// A differentiable operation and a seeded generator of valid points to check it at.
struct GradientCase {
  std::string name;
  std::function<GradientInstance(std::uint64_t seed)> instantiate;
};

// Every shipped operation, the pooling family, both losses and the composed
// encode -> similarity -> loss pipelines.
std::vector<GradientCase> gradient_cases();

struct GradientSuiteEntry {
  std::string op;
  double worst_error = 0.0;
  std::size_t seeds = 0;
  bool passed = false;
};

std::vector<GradientSuiteEntry> run_gradient_suite(std::uint64_t first_seed, std::size_t seeds,
                                                   double tolerance);

}  // namespace adret
