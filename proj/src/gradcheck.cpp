#include "adret/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "adret/error.hpp"
#include "adret/random.hpp"

namespace adret {
namespace {

double weighted_sum(const Matrix& upstream, const Matrix& output) {
  double total = 0.0;
  auto u = upstream.data();
  auto o = output.data();
  for (std::size_t i = 0; i < o.size(); ++i) total += u[i] * o[i];
  return total;
}

Matrix evaluate(const DiffOp& op, std::span<const Matrix> inputs) {
  Matrix out = op.forward(inputs);
  if (!out.all_finite()) {
    throw EvaluationError(fmt::format("finite_diff_check: {} produced a non-finite value", op.name));
  }
  return out;
}

}  // namespace

GradCheckReport finite_diff_check(const DiffOp& op, std::vector<Matrix> inputs, double tolerance,
                                  std::uint64_t seed, double step) {
  const Matrix output = evaluate(op, inputs);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const Matrix upstream = rng.uniform_matrix(output.rows(), output.cols(), -1.0, 1.0);

  const std::vector<Matrix> analytic = op.vjp(inputs, output, upstream);
  if (analytic.size() != inputs.size()) {
    throw DimensionError(fmt::format("{}: vjp returned {} gradients for {} inputs", op.name,
                                     analytic.size(), inputs.size()));
  }

  GradCheckReport report{op.name, 0.0, tolerance, 0, false};
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (analytic[k].rows() != inputs[k].rows() || analytic[k].cols() != inputs[k].cols()) {
      throw DimensionError(fmt::format("{}: gradient {} has shape {}, input has {}", op.name, k,
                                       analytic[k].shape_string(), inputs[k].shape_string()));
    }
    auto values = inputs[k].data();
    for (std::size_t e = 0; e < values.size(); ++e) {
      const double saved = values[e];
      values[e] = saved + step;
      const double plus = weighted_sum(upstream, evaluate(op, inputs));
      values[e] = saved - step;
      const double minus = weighted_sum(upstream, evaluate(op, inputs));
      values[e] = saved;

      const double numeric = (plus - minus) / (2.0 * step);
      const double exact = analytic[k].data()[e];
      const double scale = std::max({1.0, std::abs(exact), std::abs(numeric)});
      report.max_rel_error = std::max(report.max_rel_error, std::abs(exact - numeric) / scale);
      ++report.entries_checked;
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace adret
