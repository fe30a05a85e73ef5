#pragma once

// Differentiable dense operations. Every forward op `f` has a matching
// `f_vjp` that maps an upstream gradient (same shape as the output) to
// gradients with the shapes of the inputs.

#include <cstddef>
#include <span>
#include <vector>

#include "adret/matrix.hpp"

namespace adret {

struct BinaryGrad {
  Matrix lhs;
  Matrix rhs;
};

Matrix matmul(const Matrix& a, const Matrix& b);
BinaryGrad matmul_vjp(const Matrix& a, const Matrix& b, const Matrix& upstream);

Matrix transpose(const Matrix& m);
inline Matrix transpose_vjp(const Matrix& upstream) { return transpose(upstream); }

// bias is 1 x m.cols()
Matrix add_row_bias(const Matrix& m, const Matrix& bias);
BinaryGrad add_row_bias_vjp(const Matrix& m, const Matrix& bias, const Matrix& upstream);

Matrix hadamard(const Matrix& a, const Matrix& b);
BinaryGrad hadamard_vjp(const Matrix& a, const Matrix& b, const Matrix& upstream);

// 1 x cols
Matrix column_sum(const Matrix& m);
Matrix column_sum_vjp(const Matrix& m, const Matrix& upstream);

// Softmax down each column, stabilized by the column max.
Matrix softmax_columns(const Matrix& m);
Matrix softmax_columns_vjp(const Matrix& output, const Matrix& upstream);

Vector softmax_vector(std::span<const double> v);
Vector softmax_vector_vjp(std::span<const double> output, std::span<const double> upstream);

// For each (rank, column) the source row of the value placed there.
class SortPermutation {
 public:
  SortPermutation() = default;
  SortPermutation(std::size_t rows, std::size_t cols, std::vector<std::size_t> source_rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t source_row(std::size_t rank, std::size_t col) const {
    return source_rows_[rank * cols_ + col];
  }
  std::vector<std::size_t> column(std::size_t col) const;

  // Inverse of the sort: puts every sorted value back at its source row.
  Matrix restore(const Matrix& sorted) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> source_rows_;
};

struct SortResult {
  Matrix sorted;
  SortPermutation permutation;
};

// Descending per column; equal values keep their original row order.
SortResult sort_desc_per_column(const Matrix& m);
inline Matrix sort_desc_per_column_vjp(const SortPermutation& perm, const Matrix& upstream) {
  return perm.restore(upstream);
}

inline constexpr double kMinNorm = 1e-12;

Matrix l2_normalize_rows(const Matrix& m);
Matrix l2_normalize_rows_vjp(const Matrix& m, const Matrix& output, const Matrix& upstream);

// S(i, j) = cos(t_i, v_j).
Matrix cosine_sim_matrix(const Matrix& t, const Matrix& v);
BinaryGrad cosine_sim_matrix_vjp(const Matrix& t, const Matrix& v, const Matrix& upstream);

// Element-wise helpers used by callers that accumulate gradients.
void add_in_place(Matrix& acc, const Matrix& other);
Matrix scaled(const Matrix& m, double factor);

}  // namespace adret
