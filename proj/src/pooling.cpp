#include "adret/pooling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "adret/error.hpp"
#include "adret/ops.hpp"

namespace adret {
namespace {

void require_rows(const Matrix& features, const char* op) {
  if (features.rows() == 0 || features.cols() == 0) {
    throw ArgumentError(fmt::format("{}: empty feature set", op));
  }
}

void require_weight(const Matrix& w, std::size_t dim, const char* what) {
  if (w.rows() != dim || w.cols() != 1) {
    throw DimensionError(
        fmt::format("{} must be {}x1, got {}", what, dim, w.shape_string()));
  }
}

double dot(std::span<const double> a, const Matrix& column) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * column(i, 0);
  return s;
}

double parse_double(std::string_view text, std::string_view spec) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format("pooling spec '{}': bad number '{}'", spec, text));
  }
  return value;
}

Vector row_of(const Matrix& m) { return Vector(m.data().begin(), m.data().end()); }

}  // namespace

PoolParams PoolParams::zeros(std::size_t dim) { return {Matrix(dim, 1), Matrix(dim, 1)}; }

void PoolParams::validate(std::size_t dim) const {
  require_weight(w_tok, dim, "w_tok");
  require_weight(w_bal, dim, "w_bal");
}

PoolingSpec PoolingSpec::parse(std::string_view text) {
  PoolingSpec spec;
  const auto colon = text.find(':');
  const std::string_view head = text.substr(0, colon);
  const std::string_view tail = colon == std::string_view::npos ? "" : text.substr(colon + 1);
  auto no_argument = [&] {
    if (colon != std::string_view::npos) {
      throw ConfigError(fmt::format("pooling spec '{}' takes no argument", text));
    }
  };
  if (head == "mean") {
    no_argument();
    spec.method = PoolMethod::mean;
  } else if (head == "max") {
    no_argument();
    spec.method = PoolMethod::max;
  } else if (head == "adpool") {
    no_argument();
    spec.method = PoolMethod::adpool;
  } else if (head == "manual-visual") {
    no_argument();
    spec.method = PoolMethod::manual_visual;
  } else if (head == "manual-text") {
    no_argument();
    spec.method = PoolMethod::manual_text;
  } else if (head == "kmax") {
    spec.method = PoolMethod::kmax;
    std::size_t k = 0;
    const auto* end = tail.data() + tail.size();
    auto [ptr, ec] = std::from_chars(tail.data(), end, k);
    if (tail.empty() || ec != std::errc() || ptr != end) {
      throw ConfigError(fmt::format("pooling spec '{}': expected kmax:K", text));
    }
    spec.k = k;
  } else if (head == "fixed-balance") {
    spec.method = PoolMethod::fixed_balance;
    const auto comma = tail.find(',');
    if (comma == std::string_view::npos) {
      throw ConfigError(fmt::format("pooling spec '{}': expected fixed-balance:W1,W2", text));
    }
    spec.fixed_omega = {parse_double(tail.substr(0, comma), text),
                        parse_double(tail.substr(comma + 1), text)};
  } else {
    throw ConfigError(fmt::format("unknown pooling method '{}'", text));
  }
  spec.validate();
  return spec;
}

std::string PoolingSpec::to_string() const {
  switch (method) {
    case PoolMethod::mean: return "mean";
    case PoolMethod::max: return "max";
    case PoolMethod::kmax: return fmt::format("kmax:{}", k);
    case PoolMethod::adpool: return "adpool";
    case PoolMethod::manual_visual: return "manual-visual";
    case PoolMethod::manual_text: return "manual-text";
    case PoolMethod::fixed_balance:
      return fmt::format("fixed-balance:{},{}", fixed_omega[0], fixed_omega[1]);
  }
  return "?";
}

void PoolingSpec::validate() const {
  if (method == PoolMethod::kmax && k == 0) throw ConfigError("kmax pooling needs K >= 1");
  if (method == PoolMethod::fixed_balance) {
    const auto [a, b] = fixed_omega;
    if (!(a >= 0.0) || !(b >= 0.0) || std::abs(a + b - 1.0) > 1e-9) {
      throw ConfigError(fmt::format(
          "fixed-balance weights must be nonnegative and sum to 1, got {},{}", a, b));
    }
  }
}

Vector mean_pool(const Matrix& features) {
  require_rows(features, "mean_pool");
  // Summing the sorted columns makes the result independent of row order.
  return kmax_pool(features, features.rows());
}

Vector max_pool(const Matrix& features) {
  require_rows(features, "max_pool");
  Vector out(features.row(0).begin(), features.row(0).end());
  for (std::size_t i = 1; i < features.rows(); ++i)
    for (std::size_t j = 0; j < features.cols(); ++j) out[j] = std::max(out[j], features(i, j));
  return out;
}

Vector kmax_pool(const Matrix& features, std::size_t k) {
  require_rows(features, "kmax_pool");
  if (k < 1 || k > features.rows()) {
    throw ArgumentError(fmt::format("kmax_pool: K={} outside [1, {}]", k, features.rows()));
  }
  const Matrix sorted = sort_desc_per_column(features).sorted;
  Vector out(features.cols(), 0.0);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t j = 0; j < features.cols(); ++j) out[j] += sorted(r, j);
  for (double& x : out) x /= static_cast<double>(k);
  return out;
}

TokenPoolResult token_level_adpool(const Matrix& features, const Matrix& w_tok) {
  require_rows(features, "token_level_adpool");
  require_weight(w_tok, features.cols(), "w_tok");
  const Matrix sorted = sort_desc_per_column(features).sorted;
  const Matrix logits = matmul(sorted, w_tok);
  Vector theta = softmax_vector(logits.data());
  const Matrix pooled = matmul(Matrix::row_vector(theta), sorted);
  return {row_of(pooled), std::move(theta)};
}

TokenPoolGrads token_level_adpool_vjp(const Matrix& features, const Matrix& w_tok,
                                      std::span<const double> upstream) {
  require_rows(features, "token_level_adpool_vjp");
  require_weight(w_tok, features.cols(), "w_tok");
  const SortResult sort = sort_desc_per_column(features);
  const Matrix logits = matmul(sort.sorted, w_tok);
  const Vector theta = softmax_vector(logits.data());
  const Matrix theta_row = Matrix::row_vector(theta);

  // pooled = theta_row * sorted
  const BinaryGrad d_sum = matmul_vjp(theta_row, sort.sorted, Matrix::row_vector(upstream));
  const Vector d_logits = softmax_vector_vjp(theta, d_sum.lhs.data());
  // logits = sorted * w_tok
  const BinaryGrad d_proj = matmul_vjp(sort.sorted, w_tok, Matrix::column_vector(d_logits));

  Matrix d_sorted = d_sum.rhs;
  add_in_place(d_sorted, d_proj.lhs);
  return {sort_desc_per_column_vjp(sort.permutation, d_sorted), d_proj.rhs};
}

EmbeddingPoolResult embedding_level_adpool(const Matrix& features) {
  require_rows(features, "embedding_level_adpool");
  Matrix delta = softmax_columns(features);
  return {row_of(column_sum(hadamard(delta, features))), std::move(delta)};
}

Matrix embedding_level_adpool_vjp(const Matrix& features, std::span<const double> upstream) {
  require_rows(features, "embedding_level_adpool_vjp");
  const Matrix delta = softmax_columns(features);
  const Matrix d_prod = column_sum_vjp(features, Matrix::row_vector(upstream));
  const BinaryGrad d_had = hadamard_vjp(delta, features, d_prod);
  Matrix d_features = d_had.rhs;
  add_in_place(d_features, softmax_columns_vjp(delta, d_had.lhs));
  return d_features;
}

BalanceResult balance_combine(std::span<const double> t_tok, std::span<const double> t_emb,
                              const Matrix& w_bal) {
  if (t_tok.size() != t_emb.size()) {
    throw DimensionError(fmt::format("balance_combine: pooled lengths {} and {} differ",
                                     t_tok.size(), t_emb.size()));
  }
  require_weight(w_bal, t_tok.size(), "w_bal");
  const double logits[2] = {dot(t_tok, w_bal), dot(t_emb, w_bal)};
  const Vector omega = softmax_vector(logits);
  return balance_fixed(t_tok, t_emb, {omega[0], omega[1]});
}

BalanceResult balance_fixed(std::span<const double> t_tok, std::span<const double> t_emb,
                            std::array<double, 2> omega) {
  if (t_tok.size() != t_emb.size()) {
    throw DimensionError(fmt::format("balance: pooled lengths {} and {} differ", t_tok.size(),
                                     t_emb.size()));
  }
  BalanceResult out{Vector(t_tok.size()), omega};
  for (std::size_t j = 0; j < t_tok.size(); ++j)
    out.combined[j] = omega[0] * t_tok[j] + omega[1] * t_emb[j];
  return out;
}

BalanceGrads balance_combine_vjp(std::span<const double> t_tok, std::span<const double> t_emb,
                                 const Matrix& w_bal, std::span<const double> upstream) {
  const BalanceResult fwd = balance_combine(t_tok, t_emb, w_bal);
  const std::size_t d = t_tok.size();
  BalanceGrads g{Vector(d), Vector(d), Matrix(d, 1)};
  double d_omega[2] = {0.0, 0.0};
  for (std::size_t j = 0; j < d; ++j) {
    d_omega[0] += upstream[j] * t_tok[j];
    d_omega[1] += upstream[j] * t_emb[j];
  }
  const Vector d_logits = softmax_vector_vjp(fwd.omega, d_omega);
  for (std::size_t j = 0; j < d; ++j) {
    g.t_tok[j] = fwd.omega[0] * upstream[j] + d_logits[0] * w_bal(j, 0);
    g.t_emb[j] = fwd.omega[1] * upstream[j] + d_logits[1] * w_bal(j, 0);
    g.w_bal(j, 0) = d_logits[0] * t_tok[j] + d_logits[1] * t_emb[j];
  }
  return g;
}

AdPoolResult adpool(const Matrix& features, const PoolParams& params) {
  params.validate(features.cols());
  TokenPoolResult tok = token_level_adpool(features, params.w_tok);
  EmbeddingPoolResult emb = embedding_level_adpool(features);
  BalanceResult bal = balance_combine(tok.pooled, emb.pooled, params.w_bal);
  return {std::move(bal.combined), std::move(tok.theta), std::move(emb.delta), bal.omega};
}

AdPoolResult adpool_fixed_balance(const Matrix& features, const Matrix& w_tok,
                                  std::array<double, 2> omega) {
  TokenPoolResult tok = token_level_adpool(features, w_tok);
  EmbeddingPoolResult emb = embedding_level_adpool(features);
  BalanceResult bal = balance_fixed(tok.pooled, emb.pooled, omega);
  return {std::move(bal.combined), std::move(tok.theta), std::move(emb.delta), bal.omega};
}

Vector pool(const Matrix& features, const PoolingSpec& spec, const PoolParams& params) {
  spec.validate();
  switch (spec.method) {
    case PoolMethod::mean: return mean_pool(features);
    case PoolMethod::max: return max_pool(features);
    case PoolMethod::kmax:
      if (spec.k > features.rows()) {
        throw ConfigError(fmt::format("kmax:{} applied to a sequence of length {}", spec.k,
                                      features.rows()));
      }
      return kmax_pool(features, spec.k);
    case PoolMethod::adpool: return adpool(features, params).pooled;
    case PoolMethod::manual_visual:
      // Sequences shorter than 5 fall back to their full length.
      return kmax_pool(features, std::min(kManualVisualK, features.rows()));
    case PoolMethod::manual_text: return mean_pool(features);
    case PoolMethod::fixed_balance:
      return adpool_fixed_balance(features, params.w_tok, spec.fixed_omega).pooled;
  }
  throw ConfigError("unhandled pooling method");
}

namespace {

Matrix kmax_vjp(const Matrix& features, std::size_t k, std::span<const double> upstream) {
  const SortResult sort = sort_desc_per_column(features);
  Matrix d_sorted(features.rows(), features.cols());
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t j = 0; j < features.cols(); ++j)
      d_sorted(r, j) = upstream[j] / static_cast<double>(k);
  return sort_desc_per_column_vjp(sort.permutation, d_sorted);
}

}  // namespace

PoolGrads pool_vjp(const Matrix& features, const PoolingSpec& spec, const PoolParams& params,
                   std::span<const double> upstream) {
  require_rows(features, "pool_vjp");
  if (upstream.size() != features.cols()) {
    throw DimensionError("pool_vjp: upstream length does not match feature width");
  }
  const std::size_t d = features.cols();
  PoolGrads g{Matrix(features.rows(), d), Matrix(d, 1), Matrix(d, 1)};
  switch (spec.method) {
    case PoolMethod::mean:
    case PoolMethod::manual_text:
      g.features = kmax_vjp(features, features.rows(), upstream);
      break;
    case PoolMethod::max: g.features = kmax_vjp(features, 1, upstream); break;
    case PoolMethod::kmax: g.features = kmax_vjp(features, spec.k, upstream); break;
    case PoolMethod::manual_visual:
      g.features = kmax_vjp(features, std::min(kManualVisualK, features.rows()), upstream);
      break;
    case PoolMethod::adpool:
    case PoolMethod::fixed_balance: {
      const TokenPoolResult tok = token_level_adpool(features, params.w_tok);
      const EmbeddingPoolResult emb = embedding_level_adpool(features);
      Vector up_tok(d), up_emb(d);
      if (spec.method == PoolMethod::adpool) {
        BalanceGrads bal = balance_combine_vjp(tok.pooled, emb.pooled, params.w_bal, upstream);
        up_tok = std::move(bal.t_tok);
        up_emb = std::move(bal.t_emb);
        g.w_bal = std::move(bal.w_bal);
      } else {
        for (std::size_t j = 0; j < d; ++j) {
          up_tok[j] = spec.fixed_omega[0] * upstream[j];
          up_emb[j] = spec.fixed_omega[1] * upstream[j];
        }
      }
      TokenPoolGrads tg = token_level_adpool_vjp(features, params.w_tok, up_tok);
      g.features = std::move(tg.features);
      g.w_tok = std::move(tg.w_tok);
      add_in_place(g.features, embedding_level_adpool_vjp(features, up_emb));
      break;
    }
  }
  return g;
}

}  // namespace adret
