#include "adret/adam.hpp"

#include <cmath>

#include <fmt/format.h>

#include "adret/error.hpp"

namespace adret {

AdamState::AdamState(std::span<const NamedTensor> params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& p : params) {
    m_.emplace_back(p.value->rows(), p.value->cols());
    v_.emplace_back(p.value->rows(), p.value->cols());
  }
}

void AdamState::step(std::span<const NamedTensor> params, std::span<const NamedTensor> grads,
                     double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("AdamState::step: parameter list does not match optimizer state");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& g = *grads[k].value;
    if (g.rows() != m_[k].rows() || g.cols() != m_[k].cols() ||
        params[k].value->rows() != m_[k].rows() || params[k].value->cols() != m_[k].cols()) {
      throw DimensionError(fmt::format("AdamState::step: shape mismatch for {}", params[k].name));
    }
    if (!g.all_finite()) {
      throw DivergenceError(fmt::format("non-finite gradient for parameter {}", params[k].name));
    }
  }

  ++step_;
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(cfg_.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].value->data();
    auto g = grads[k].value->data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
}

}  // namespace adret
