#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "../oracles.hpp"
#include "adret/error.hpp"
#include "adret/pooling.hpp"
#include "adret/random.hpp"

using namespace adret;

namespace {

double max_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

Matrix shuffled_rows(const Matrix& m, Rng& rng) {
  std::vector<std::size_t> order(m.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < order.size(); ++i)
    std::copy(m.row(order[i]).begin(), m.row(order[i]).end(), out.row(i).begin());
  return out;
}

}  // namespace

TEST_CASE("simple aggregators") {
  const Matrix f = Matrix::from_rows({{1, 3}, {3, 5}});
  CHECK(mean_pool(f) == Vector{2, 4});
  CHECK(max_pool(f) == Vector{3, 5});
  CHECK(mean_pool(Matrix::from_rows({{1, 2}})) == Vector{1, 2});
  CHECK(max_pool(Matrix(3, 2, 7.0)) == Vector{7, 7});
  CHECK(kmax_pool(Matrix::from_rows({{5}, {3}, {1}}), 2) == Vector{4});
  CHECK_THROWS_AS(kmax_pool(f, 0), ArgumentError);
  CHECK_THROWS_AS(kmax_pool(f, 3), ArgumentError);
  CHECK_THROWS_AS(mean_pool(Matrix()), ArgumentError);
  CHECK_THROWS_AS(max_pool(Matrix()), ArgumentError);
}

TEST_CASE("token-level pooling") {
  Rng rng(12);
  SUBCASE("zero weights give the mean") {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix f = rng.normal_matrix(rng.between(1, 10), 6);
      const auto r = token_level_adpool(f, Matrix(6, 1));
      CHECK(max_diff(r.pooled, mean_pool(f)) <= 1e-12);
      for (double t : r.theta) CHECK(t == doctest::Approx(1.0 / f.rows()));
    }
  }
  SUBCASE("single row is returned whatever the weights") {
    const Matrix f = Matrix::from_rows({{0.3, -2.0, 5.0}});
    const auto r = token_level_adpool(f, rng.normal_matrix(3, 1, 4.0));
    CHECK(max_diff(r.pooled, f.row(0)) <= 1e-15);
    CHECK(r.theta == Vector{1.0});
  }
  SUBCASE("3x2 with w = [1, 0] matches a hand recomputation") {
    const Matrix f = Matrix::from_rows({{0.2, 1.0}, {0.9, -0.5}, {-0.4, 0.3}});
    const auto r = token_level_adpool(f, Matrix::from_rows({{1}, {0}}));
    // Sorted columns: [0.9, 0.2, -0.4] and [1.0, 0.3, -0.5]; logits are the first column.
    const double z = std::exp(0.9) + std::exp(0.2) + std::exp(-0.4);
    const double th[3] = {std::exp(0.9) / z, std::exp(0.2) / z, std::exp(-0.4) / z};
    CHECK(std::abs(r.pooled[0] - (th[0] * 0.9 + th[1] * 0.2 + th[2] * -0.4)) <= 1e-12);
    CHECK(std::abs(r.pooled[1] - (th[0] * 1.0 + th[1] * 0.3 + th[2] * -0.5)) <= 1e-12);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(r.theta[i] - th[i]) <= 1e-12);
  }
  SUBCASE("matches the scalar oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix f = rng.normal_matrix(rng.between(1, 8), 5);
      const Matrix w = rng.normal_matrix(5, 1);
      CHECK(max_diff(token_level_adpool(f, w).pooled, oracle::token_pool(f, w.column(0))) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(token_level_adpool(Matrix(), Matrix(2, 1)), ArgumentError);
  CHECK_THROWS_AS(token_level_adpool(Matrix(2, 3), Matrix(2, 1)), DimensionError);
}

TEST_CASE("embedding-level pooling") {
  const auto r = embedding_level_adpool(Matrix::from_rows({{2, 4}, {0, 4}}));
  CHECK(std::abs(r.pooled[0] - 2.0 * std::exp(2.0) / (std::exp(2.0) + 1.0)) <= 1e-12);
  CHECK(r.pooled[0] == doctest::Approx(1.7616).epsilon(1e-4));
  CHECK(std::abs(r.pooled[1] - 4.0) <= 1e-12);
  CHECK_THROWS_AS(embedding_level_adpool(Matrix()), ArgumentError);

  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix f = rng.normal_matrix(rng.between(1, 9), 4);
    CHECK(max_diff(embedding_level_adpool(f).pooled, oracle::embedding_pool(f)) <= 1e-12);
  }

  SUBCASE("approaches max pooling under scaling") {
    Matrix g = Matrix::from_rows({{0.1, 0.9, 0.3}, {1.0, 0.2, 0.4}, {0.4, 0.3, 1.2}});
    Matrix scaled = g;
    for (double& x : scaled.data()) x *= 50.0;
    Vector soft = embedding_level_adpool(scaled).pooled;
    for (double& x : soft) x /= 50.0;
    CHECK(max_diff(soft, max_pool(g)) <= 1e-6);
  }
}

TEST_CASE("balance") {
  Rng rng(2);
  const Vector t{0.5, -1.0, 2.0};
  const auto same = balance_combine(t, t, rng.normal_matrix(3, 1, 10.0));
  CHECK(max_diff(same.combined, t) <= 1e-12);

  const Vector a{1.0, 0.0, 0.0}, b{0.0, 2.0, 0.0};
  const auto zero = balance_combine(a, b, Matrix(3, 1));
  CHECK(zero.omega[0] == 0.5);
  CHECK(zero.omega[1] == 0.5);

  const auto fixed = balance_fixed(a, b, {0.75, 0.25});
  CHECK(max_diff(fixed.combined, Vector{0.75, 0.5, 0.0}) <= 1e-15);

  CHECK_THROWS_AS(balance_combine(a, Vector{1.0}, Matrix(3, 1)), DimensionError);
  CHECK_THROWS_AS(balance_combine(a, b, Matrix(2, 1)), DimensionError);
}

TEST_CASE("adpool composition") {
  Rng rng(31);
  SUBCASE("single row") {
    const Matrix f = Matrix::from_rows({{1.5, -0.5}});
    PoolParams p{rng.normal_matrix(2, 1), rng.normal_matrix(2, 1)};
    CHECK(max_diff(adpool(f, p).pooled, f.row(0)) <= 1e-12);
  }
  SUBCASE("zero parameters average mean and soft max") {
    const Matrix f = rng.normal_matrix(6, 4);
    const Vector mean = mean_pool(f), soft = embedding_level_adpool(f).pooled;
    Vector expect(4);
    for (std::size_t j = 0; j < 4; ++j) expect[j] = 0.5 * mean[j] + 0.5 * soft[j];
    CHECK(max_diff(adpool(f, PoolParams::zeros(4)).pooled, expect) <= 1e-12);
  }
  SUBCASE("diagnostic weights sum to one") {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix f = rng.normal_matrix(rng.between(1, 10), 5);
      const auto r = adpool(f, {rng.normal_matrix(5, 1), rng.normal_matrix(5, 1)});
      CHECK(std::abs(sum(r.theta) - 1.0) <= 1e-12);
      CHECK(std::abs(r.omega[0] + r.omega[1] - 1.0) <= 1e-12);
      for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(sum(r.delta.column(j)) - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("every pooling method is invariant to row order") {
  Rng rng(44);
  const std::vector<std::string> specs{"mean", "max", "kmax:3", "adpool", "manual-visual",
                                       "manual-text", "fixed-balance:0.75,0.25"};
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix f = rng.normal_matrix(rng.between(3, 10), 4);
    const Matrix g = shuffled_rows(f, rng);
    const PoolParams p{rng.normal_matrix(4, 1), rng.normal_matrix(4, 1)};
    for (const auto& s : specs) {
      CAPTURE(s);
      CHECK(max_diff(pool(f, PoolingSpec::parse(s), p), pool(g, PoolingSpec::parse(s), p)) <= 1e-12);
    }
  }
}

TEST_CASE("pool dispatch") {
  Rng rng(9);
  const Matrix f = rng.normal_matrix(8, 3);
  const PoolParams p = PoolParams::zeros(3);
  CHECK(pool(f, PoolingSpec::parse("manual-visual"), p) == kmax_pool(f, 5));
  CHECK(pool(f, PoolingSpec::parse("manual-text"), p) == mean_pool(f));
  CHECK(pool(f, PoolingSpec::parse("mean"), p) == mean_pool(f));
  CHECK(pool(f, PoolingSpec::parse("max"), p) == max_pool(f));
  CHECK(pool(f, PoolingSpec::parse("kmax:2"), p) == kmax_pool(f, 2));
  CHECK_THROWS_AS(pool(f, PoolingSpec::parse("kmax:9"), p), ConfigError);

  SUBCASE("manual visual pooling on short sequences uses every row") {
    const Matrix short_f = rng.normal_matrix(3, 3);
    CHECK(pool(short_f, PoolingSpec::parse("manual-visual"), p) == mean_pool(short_f));
  }
}

TEST_CASE("pooling spec parsing") {
  CHECK(PoolingSpec::parse("kmax:4").k == 4);
  CHECK(PoolingSpec::parse("fixed-balance:0.25,0.75").fixed_omega[1] == 0.75);
  for (const char* s : {"mean", "max", "kmax:4", "adpool", "manual-visual", "manual-text"})
    CHECK(PoolingSpec::parse(s).to_string() == s);
  const PoolingSpec fb = PoolingSpec::parse("fixed-balance:0.25,0.75");
  CHECK(PoolingSpec::parse(fb.to_string()) == fb);
  CHECK_THROWS_AS(PoolingSpec::parse("median"), ConfigError);
  CHECK_THROWS_AS(PoolingSpec::parse("kmax:0"), ConfigError);
  CHECK_THROWS_AS(PoolingSpec::parse("kmax:x"), ConfigError);
  CHECK_THROWS_AS(PoolingSpec::parse("fixed-balance:0.5,0.6"), ConfigError);
  CHECK_THROWS_AS(PoolingSpec::parse("fixed-balance:-0.5,1.5"), ConfigError);
}
