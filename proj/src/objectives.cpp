#include "adret/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "adret/error.hpp"

namespace adret {
namespace {

void require_square(const Matrix& s, const char* op) {
  if (s.rows() != s.cols()) {
    throw DimensionError(fmt::format("{}: similarity matrix must be square, got {}", op,
                                     s.shape_string()));
  }
}

void require_batch(const Matrix& s, const char* op) {
  require_square(s, op);
  if (s.rows() < 2) {
    throw ArgumentError(fmt::format("{}: batch of {} has no negatives", op, s.rows()));
  }
}

// Indices != exclude, ordered by descending score then ascending index; first k kept.
template <typename Score>
std::vector<std::size_t> top_k_excluding(std::size_t n, std::size_t exclude, std::size_t k,
                                         Score score) {
  std::vector<std::size_t> idx;
  idx.reserve(n - 1);
  for (std::size_t c = 0; c < n; ++c)
    if (c != exclude) idx.push_back(c);
  auto better = [&](std::size_t a, std::size_t b) {
    const double sa = score(a);
    const double sb = score(b);
    return sa > sb || (sa == sb && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

}  // namespace

std::string_view to_string(LossMode mode) {
  switch (mode) {
    case LossMode::hard_triplet: return "hard-triplet";
    case LossMode::infonce_adaptive: return "infonce-adaptive";
    case LossMode::infonce_fixed: return "infonce-fixed";
  }
  return "?";
}

LossMode parse_loss_mode(std::string_view text) {
  if (text == "hard-triplet") return LossMode::hard_triplet;
  if (text == "infonce-adaptive") return LossMode::infonce_adaptive;
  if (text == "infonce-fixed") return LossMode::infonce_fixed;
  throw ConfigError(fmt::format("unknown loss mode '{}'", text));
}

void LossConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("loss.temperature must be > 0");
  if (!(margin >= 0.0)) throw ConfigError("loss.margin must be >= 0");
  if (mode == LossMode::infonce_fixed && fixed_k < 1) throw ConfigError("loss.k must be >= 1");
}

LossValue hard_triplet_loss(const Matrix& s, double margin) {
  require_batch(s, "hard_triplet_loss");
  const std::size_t n = s.rows();
  LossValue out{0.0, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t hard_image = i == 0 ? 1 : 0;
    std::size_t hard_text = hard_image;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (s(i, j) > s(i, hard_image)) hard_image = j;
      if (s(j, i) > s(hard_text, i)) hard_text = j;
    }
    const double to_image = margin - s(i, i) + s(i, hard_image);
    if (to_image > 0.0) {
      out.loss += to_image;
      out.grad(i, i) -= 1.0;
      out.grad(i, hard_image) += 1.0;
    }
    const double to_text = margin - s(i, i) + s(hard_text, i);
    if (to_text > 0.0) {
      out.loss += to_text;
      out.grad(i, i) -= 1.0;
      out.grad(hard_text, i) += 1.0;
    }
  }
  return out;
}

double alignment(const Matrix& s) {
  require_square(s, "alignment");
  if (s.rows() == 0) throw ArgumentError("alignment: empty similarity matrix");
  double total = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i) total += s(i, i);
  return total / static_cast<double>(s.rows());
}

double uniformity(const Matrix& s) {
  require_square(s, "uniformity");
  if (s.empty()) throw ArgumentError("uniformity: empty similarity matrix");
  const auto data = s.data();
  const double mx = *std::max_element(data.begin(), data.end());
  double total = 0.0;
  for (double x : data) total += std::exp(x - mx);
  return mx + std::log(total / static_cast<double>(data.size()));
}

std::size_t adaptive_k(double gamma_align, double gamma_uniform, std::size_t batch_size) {
  if (batch_size < 2) throw ArgumentError("adaptive_k: batch size must be >= 2");
  const double ga = std::clamp(std::isnan(gamma_align) ? 0.0 : gamma_align, 0.0, 1.0);
  const double gu = std::clamp(std::isnan(gamma_uniform) ? 0.0 : gamma_uniform, 0.0, 1.0);
  const double raw = std::floor(static_cast<double>(batch_size) *
                                std::cos((ga + gu) * std::numbers::pi / 4.0));
  const double upper = static_cast<double>(batch_size - 1);
  return static_cast<std::size_t>(std::max(1.0, std::min(raw, upper)));
}

NegativeSelection select_negatives(const Matrix& s, std::size_t k) {
  require_batch(s, "select_negatives");
  const std::size_t n = s.rows();
  if (k < 1 || k > n - 1) {
    throw ArgumentError(fmt::format("select_negatives: K={} outside [1, {}]", k, n - 1));
  }
  NegativeSelection sel;
  sel.text_to_image.reserve(n);
  sel.image_to_text.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    sel.text_to_image.push_back(top_k_excluding(n, i, k, [&](std::size_t j) { return s(i, j); }));
  }
  for (std::size_t j = 0; j < n; ++j) {
    sel.image_to_text.push_back(top_k_excluding(n, j, k, [&](std::size_t i) { return s(i, j); }));
  }
  return sel;
}

LossValue info_nce_loss(const Matrix& s, const NegativeSelection& selection, double temperature) {
  if (!(temperature > 0.0)) {
    throw ConfigError(fmt::format("info_nce_loss: temperature must be > 0, got {}", temperature));
  }
  require_batch(s, "info_nce_loss");
  const std::size_t n = s.rows();
  if (selection.text_to_image.size() != n || selection.image_to_text.size() != n) {
    throw DimensionError("info_nce_loss: selection does not match batch size");
  }
  const double inv_tau = 1.0 / temperature;
  const double scale = 1.0 / static_cast<double>(n);
  LossValue out{0.0, Matrix(n, n)};

  // One anchor: positive logit plus a list of (row, col) negatives.
  std::vector<double> logits;
  auto accumulate = [&](std::size_t pos_r, std::size_t pos_c, auto&& negatives) {
    logits.clear();
    logits.push_back(s(pos_r, pos_c) * inv_tau);
    for (auto [r, c] : negatives) logits.push_back(s(r, c) * inv_tau);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double log_z = mx + std::log(z);
    out.loss += scale * (log_z - logits[0]);
    out.grad(pos_r, pos_c) += scale * inv_tau * (std::exp(logits[0] - log_z) - 1.0);
    std::size_t m = 1;
    for (auto [r, c] : negatives) out.grad(r, c) += scale * inv_tau * std::exp(logits[m++] - log_z);
  };

  std::vector<std::pair<std::size_t, std::size_t>> negs;
  for (std::size_t i = 0; i < n; ++i) {
    negs.clear();
    for (std::size_t j : selection.text_to_image[i]) {
      if (j == i) throw ArgumentError("info_nce_loss: negative list contains the positive");
      negs.emplace_back(i, j);
    }
    accumulate(i, i, negs);
  }
  for (std::size_t j = 0; j < n; ++j) {
    negs.clear();
    for (std::size_t i : selection.image_to_text[j]) {
      if (i == j) throw ArgumentError("info_nce_loss: negative list contains the positive");
      negs.emplace_back(i, j);
    }
    accumulate(j, j, negs);
  }
  return out;
}

AdOptValue adopt_loss(const Matrix& s, double temperature) {
  require_batch(s, "adopt_loss");
  BatchMaturity maturity;
  maturity.gamma_align = std::clamp(alignment(s), 0.0, 1.0);
  maturity.gamma_uniform = std::clamp(uniformity(s), 0.0, 1.0);
  maturity.k_selected = adaptive_k(maturity.gamma_align, maturity.gamma_uniform, s.rows());
  LossValue v = info_nce_loss(s, select_negatives(s, maturity.k_selected), temperature);
  return {v.loss, maturity, std::move(v.grad)};
}

BatchLoss compute_loss(const Matrix& s, const LossConfig& cfg) {
  cfg.validate();
  BatchLoss out;
  switch (cfg.mode) {
    case LossMode::hard_triplet: {
      LossValue v = hard_triplet_loss(s, cfg.margin);
      out.loss = v.loss;
      out.grad = std::move(v.grad);
      break;
    }
    case LossMode::infonce_fixed: {
      const std::size_t k = std::min(cfg.fixed_k, s.rows() - 1);
      LossValue v = info_nce_loss(s, select_negatives(s, k), cfg.temperature);
      out.loss = v.loss;
      out.grad = std::move(v.grad);
      break;
    }
    case LossMode::infonce_adaptive: {
      AdOptValue v = adopt_loss(s, cfg.temperature);
      out.loss = v.loss;
      out.grad = std::move(v.grad);
      out.k = v.maturity.k_selected;
      out.gamma_align = v.maturity.gamma_align;
      out.gamma_uniform = v.maturity.gamma_uniform;
      return out;
    }
  }
  out.gamma_align = std::clamp(alignment(s), 0.0, 1.0);
  out.gamma_uniform = std::clamp(uniformity(s), 0.0, 1.0);
  return out;
}

}  // namespace adret
