#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "adret/matrix.hpp"

namespace adret {

// Learnable pooling weights of one modality. Both are d x 1.
struct PoolParams {
  Matrix w_tok;
  Matrix w_bal;

  static PoolParams zeros(std::size_t dim);
  std::size_t dim() const noexcept { return w_tok.rows(); }
  void validate(std::size_t dim) const;
};

enum class PoolMethod { mean, max, kmax, adpool, manual_visual, manual_text, fixed_balance };

// Text form: "mean", "max", "kmax:K", "adpool", "manual-visual", "manual-text",
// "fixed-balance:W_TOK,W_EMB".
struct PoolingSpec {
  PoolMethod method = PoolMethod::adpool;
  std::size_t k = 0;
  std::array<double, 2> fixed_omega{0.5, 0.5};

  static PoolingSpec parse(std::string_view text);
  std::string to_string() const;
  void validate() const;
  bool uses_token_weights() const noexcept {
    return method == PoolMethod::adpool || method == PoolMethod::fixed_balance;
  }
  bool uses_balance_weights() const noexcept { return method == PoolMethod::adpool; }

  friend bool operator==(const PoolingSpec&, const PoolingSpec&) = default;
};

inline constexpr std::size_t kManualVisualK = 5;

Vector mean_pool(const Matrix& features);
Vector max_pool(const Matrix& features);
Vector kmax_pool(const Matrix& features, std::size_t k);

struct TokenPoolResult {
  Vector pooled;
  Vector theta;  // one weight per sorted row
};
TokenPoolResult token_level_adpool(const Matrix& features, const Matrix& w_tok);

struct EmbeddingPoolResult {
  Vector pooled;
  Matrix delta;  // per-column softmax weights, same shape as the features
};
EmbeddingPoolResult embedding_level_adpool(const Matrix& features);

struct BalanceResult {
  Vector combined;
  std::array<double, 2> omega{};
};
BalanceResult balance_combine(std::span<const double> t_tok, std::span<const double> t_emb,
                              const Matrix& w_bal);
BalanceResult balance_fixed(std::span<const double> t_tok, std::span<const double> t_emb,
                            std::array<double, 2> omega);

struct AdPoolResult {
  Vector pooled;
  Vector theta;
  Matrix delta;
  std::array<double, 2> omega{};
};
AdPoolResult adpool(const Matrix& features, const PoolParams& params);
AdPoolResult adpool_fixed_balance(const Matrix& features, const Matrix& w_tok,
                                  std::array<double, 2> omega);

Vector pool(const Matrix& features, const PoolingSpec& spec, const PoolParams& params);

// Gradients of <upstream, pool(...)> with respect to the features and both
// weight vectors. Weights a method does not use get zero gradient.
struct PoolGrads {
  Matrix features;
  Matrix w_tok;
  Matrix w_bal;
};
PoolGrads pool_vjp(const Matrix& features, const PoolingSpec& spec, const PoolParams& params,
                   std::span<const double> upstream);

struct TokenPoolGrads {
  Matrix features;
  Matrix w_tok;
};
TokenPoolGrads token_level_adpool_vjp(const Matrix& features, const Matrix& w_tok,
                                      std::span<const double> upstream);
Matrix embedding_level_adpool_vjp(const Matrix& features, std::span<const double> upstream);

struct BalanceGrads {
  Vector t_tok;
  Vector t_emb;
  Matrix w_bal;
};
BalanceGrads balance_combine_vjp(std::span<const double> t_tok, std::span<const double> t_emb,
                                 const Matrix& w_bal, std::span<const double> upstream);

}  // namespace adret
