#pragma once

// Straight-line scalar reimplementations used as references in tests. They
// share no code with the library beyond Matrix storage.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "adret/matrix.hpp"

namespace oracle {

using adret::Matrix;

inline double hard_triplet(const Matrix& s, double margin) {
  const std::size_t n = s.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_best = -1e300;
    double col_best = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (s(i, j) > row_best) row_best = s(i, j);
      if (s(j, i) > col_best) col_best = s(j, i);
    }
    total += std::max(0.0, margin - s(i, i) + row_best);
    total += std::max(0.0, margin - s(i, i) + col_best);
  }
  return total;
}

// Indices != skip ordered by descending value, ties by ascending index.
inline std::vector<std::size_t> ranked_others(const std::vector<double>& values, std::size_t skip) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < values.size(); ++j)
    if (j != skip) idx.push_back(j);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  return idx;
}

inline double info_nce(const Matrix& s, std::size_t k, double tau) {
  const std::size_t n = s.rows();
  double t2v = 0.0;
  double v2t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(n), col(n);
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = s(i, j);
      col[j] = s(j, i);
    }
    const auto rneg = ranked_others(row, i);
    const auto cneg = ranked_others(col, i);
    double rden = std::exp(s(i, i) / tau);
    double cden = std::exp(s(i, i) / tau);
    for (std::size_t q = 0; q < k; ++q) {
      rden += std::exp(row[rneg[q]] / tau);
      cden += std::exp(col[cneg[q]] / tau);
    }
    t2v += -(s(i, i) / tau - std::log(rden));
    v2t += -(s(i, i) / tau - std::log(cden));
  }
  return t2v / static_cast<double>(n) + v2t / static_cast<double>(n);
}

inline double alignment(const Matrix& s) {
  double sum = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i) sum += s(i, i);
  return sum / static_cast<double>(s.rows());
}

inline double uniformity(const Matrix& s) {
  double sum = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j) sum += std::exp(s(i, j));
  return std::log(sum / static_cast<double>(s.size()));
}

inline std::size_t adaptive_k(double ga, double gu, std::size_t b) {
  ga = std::min(1.0, std::max(0.0, ga));
  gu = std::min(1.0, std::max(0.0, gu));
  const double pi = std::acos(-1.0);
  const double raw = std::floor(static_cast<double>(b) * std::cos((ga + gu) * pi / 4.0));
  long k = static_cast<long>(raw);
  if (k > static_cast<long>(b) - 1) k = static_cast<long>(b) - 1;
  if (k < 1) k = 1;
  return static_cast<std::size_t>(k);
}

inline double adopt(const Matrix& s, double tau) {
  return info_nce(s, adaptive_k(alignment(s), uniformity(s), s.rows()), tau);
}

// Full argsort per query; percent of queries with a relevant item in the top k.
inline double recall(const Matrix& scores, const std::vector<std::vector<std::size_t>>& relevant,
                     std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t q = 0; q < scores.rows(); ++q) {
    std::vector<std::size_t> order(scores.cols());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores(q, a) != scores(q, b)) return scores(q, a) > scores(q, b);
      return a < b;
    });
    bool hit = false;
    for (std::size_t r = 0; r < k && r < order.size(); ++r)
      for (std::size_t rel : relevant[q])
        if (order[r] == rel) hit = true;
    if (hit) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(scores.rows());
}

// Token-level pooling by hand: sort each column, score rows, softmax, sum.
inline std::vector<double> token_pool(const Matrix& f, const std::vector<double>& w) {
  const std::size_t m = f.rows(), d = f.cols();
  Matrix u(m, d);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> col(m);
    for (std::size_t i = 0; i < m; ++i) col[i] = f(i, j);
    std::sort(col.begin(), col.end(), std::greater<>());
    for (std::size_t i = 0; i < m; ++i) u(i, j) = col[i];
  }
  std::vector<double> logits(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) logits[i] += u(i, j) * w[j];
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) z += (l = std::exp(l - top));
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += logits[i] / z * u(i, j);
  return out;
}

inline std::vector<double> embedding_pool(const Matrix& f) {
  std::vector<double> out(f.cols(), 0.0);
  for (std::size_t j = 0; j < f.cols(); ++j) {
    double top = f(0, j);
    for (std::size_t i = 1; i < f.rows(); ++i) top = std::max(top, f(i, j));
    double z = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < f.rows(); ++i) {
      const double e = std::exp(f(i, j) - top);
      z += e;
      acc += e * f(i, j);
    }
    out[j] = acc / z;
  }
  return out;
}

}  // namespace oracle
