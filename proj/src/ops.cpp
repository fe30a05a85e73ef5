#include "adret/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "adret/error.hpp"

namespace adret {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(
        fmt::format("{}: shape mismatch {} vs {}", op, a.shape_string(), b.shape_string()));
  }
}

void require_nonempty(const Matrix& m, const char* op) {
  if (m.empty()) throw ArgumentError(fmt::format("{}: empty matrix", op));
}

Matrix ensure_finite(Matrix m, const char* op) {
  if (!m.all_finite()) throw EvaluationError(fmt::format("{}: non-finite result", op));
  return m;
}

double row_norm(std::span<const double> row) {
  double sq = 0.0;
  for (double x : row) sq += x * x;
  return std::sqrt(sq);
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError(
        fmt::format("matmul: cannot multiply {} by {}", a.shape_string(), b.shape_string()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return ensure_finite(std::move(out), "matmul");
}

BinaryGrad matmul_vjp(const Matrix& a, const Matrix& b, const Matrix& upstream) {
  return {matmul(upstream, transpose(b)), matmul(transpose(a), upstream)};
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix add_row_bias(const Matrix& m, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols()) {
    throw DimensionError(fmt::format("add_row_bias: bias {} does not match matrix {}",
                                     bias.shape_string(), m.shape_string()));
  }
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias(0, j);
  }
  return ensure_finite(std::move(out), "add_row_bias");
}

BinaryGrad add_row_bias_vjp(const Matrix& m, const Matrix& bias, const Matrix& upstream) {
  require_same_shape(m, upstream, "add_row_bias_vjp");
  (void)bias;
  return {upstream, column_sum(upstream)};
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto od = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i];
  return ensure_finite(std::move(out), "hadamard");
}

BinaryGrad hadamard_vjp(const Matrix& a, const Matrix& b, const Matrix& upstream) {
  return {hadamard(upstream, b), hadamard(upstream, a)};
}

Matrix column_sum(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
  return out;
}

Matrix column_sum_vjp(const Matrix& m, const Matrix& upstream) {
  if (upstream.rows() != 1 || upstream.cols() != m.cols()) {
    throw DimensionError("column_sum_vjp: upstream must be 1 x cols");
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = upstream(0, j);
  return out;
}

Matrix softmax_columns(const Matrix& m) {
  require_nonempty(m, "softmax_columns");
  Matrix out(m.rows(), m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double mx = m(0, j);
    for (std::size_t i = 1; i < m.rows(); ++i) mx = std::max(mx, m(i, j));
    double total = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      out(i, j) = std::exp(m(i, j) - mx);
      total += out(i, j);
    }
    for (std::size_t i = 0; i < m.rows(); ++i) out(i, j) /= total;
  }
  return out;
}

Matrix softmax_columns_vjp(const Matrix& output, const Matrix& upstream) {
  require_same_shape(output, upstream, "softmax_columns_vjp");
  Matrix out(output.rows(), output.cols());
  for (std::size_t j = 0; j < output.cols(); ++j) {
    double dot = 0.0;
    for (std::size_t i = 0; i < output.rows(); ++i) dot += output(i, j) * upstream(i, j);
    for (std::size_t i = 0; i < output.rows(); ++i)
      out(i, j) = output(i, j) * (upstream(i, j) - dot);
  }
  return out;
}

Vector softmax_vector(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("softmax_vector: empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

Vector softmax_vector_vjp(std::span<const double> output, std::span<const double> upstream) {
  if (output.size() != upstream.size()) {
    throw DimensionError("softmax_vector_vjp: length mismatch");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) dot += output[i] * upstream[i];
  Vector out(output.size());
  for (std::size_t i = 0; i < output.size(); ++i) out[i] = output[i] * (upstream[i] - dot);
  return out;
}

SortPermutation::SortPermutation(std::size_t rows, std::size_t cols,
                                 std::vector<std::size_t> source_rows)
    : rows_(rows), cols_(cols), source_rows_(std::move(source_rows)) {
  if (source_rows_.size() != rows * cols) {
    throw DimensionError("SortPermutation: index table size mismatch");
  }
}

std::vector<std::size_t> SortPermutation::column(std::size_t col) const {
  std::vector<std::size_t> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = source_row(r, col);
  return out;
}

Matrix SortPermutation::restore(const Matrix& sorted) const {
  if (sorted.rows() != rows_ || sorted.cols() != cols_) {
    throw DimensionError(fmt::format("SortPermutation::restore: expected {}x{}, got {}", rows_,
                                     cols_, sorted.shape_string()));
  }
  Matrix out(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(source_row(r, c), c) = sorted(r, c);
  return out;
}

SortResult sort_desc_per_column(const Matrix& m) {
  require_nonempty(m, "sort_desc_per_column");
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  Matrix sorted(rows, cols);
  std::vector<std::size_t> table(rows * cols);
  std::vector<std::size_t> order(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return m(a, c) > m(b, c); });
    for (std::size_t r = 0; r < rows; ++r) {
      table[r * cols + c] = order[r];
      sorted(r, c) = m(order[r], c);
    }
  }
  return {std::move(sorted), SortPermutation(rows, cols, std::move(table))};
}

Matrix l2_normalize_rows(const Matrix& m) {
  require_nonempty(m, "l2_normalize_rows");
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const double norm = row_norm(row);
    if (!(norm >= kMinNorm)) {
      throw DegenerateVectorError(
          fmt::format("l2_normalize_rows: row {} has norm {:.3g}", i, norm));
    }
    for (double& x : row) x /= norm;
  }
  return out;
}

Matrix l2_normalize_rows_vjp(const Matrix& m, const Matrix& output, const Matrix& upstream) {
  require_same_shape(m, upstream, "l2_normalize_rows_vjp");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double norm = row_norm(m.row(i));
    double dot = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) dot += output(i, j) * upstream(i, j);
    for (std::size_t j = 0; j < m.cols(); ++j)
      out(i, j) = (upstream(i, j) - output(i, j) * dot) / norm;
  }
  return out;
}

Matrix cosine_sim_matrix(const Matrix& t, const Matrix& v) {
  if (t.cols() != v.cols()) {
    throw DimensionError(fmt::format("cosine_sim_matrix: column mismatch {} vs {}",
                                     t.shape_string(), v.shape_string()));
  }
  const Matrix tn = l2_normalize_rows(t);
  const Matrix vn = l2_normalize_rows(v);
  Matrix s = matmul(tn, transpose(vn));
  for (double& x : s.data()) x = std::clamp(x, -1.0, 1.0);
  return s;
}

BinaryGrad cosine_sim_matrix_vjp(const Matrix& t, const Matrix& v, const Matrix& upstream) {
  const Matrix tn = l2_normalize_rows(t);
  const Matrix vn = l2_normalize_rows(v);
  if (upstream.rows() != t.rows() || upstream.cols() != v.rows()) {
    throw DimensionError("cosine_sim_matrix_vjp: upstream shape mismatch");
  }
  const Matrix d_tn = matmul(upstream, vn);
  const Matrix d_vn = matmul(transpose(upstream), tn);
  return {l2_normalize_rows_vjp(t, tn, d_tn), l2_normalize_rows_vjp(v, vn, d_vn)};
}

void add_in_place(Matrix& acc, const Matrix& other) {
  require_same_shape(acc, other, "add_in_place");
  auto a = acc.data();
  auto o = other.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += o[i];
}

Matrix scaled(const Matrix& m, double factor) {
  Matrix out = m;
  for (double& x : out.data()) x *= factor;
  return out;
}

}  // namespace adret
