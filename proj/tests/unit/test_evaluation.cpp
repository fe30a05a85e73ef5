#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "../oracles.hpp"
#include "adret/error.hpp"
#include "adret/evaluation.hpp"
#include "adret/ops.hpp"
#include "adret/random.hpp"

using namespace adret;

namespace {

GroundTruth gt(std::vector<std::vector<std::size_t>> relevant) { return {std::move(relevant)}; }

}  // namespace

TEST_CASE("recall at K") {
  const Matrix one = Matrix::from_rows({{0.9, 0.1, 0.3}});
  CHECK(recall_at_k(one, gt({{0}}), 1) == 100.0);

  Matrix ranked(1, 12);
  for (std::size_t j = 0; j < 12; ++j) ranked(0, j) = 1.0 - 0.05 * j;  // candidate 5 is sixth
  CHECK(recall_at_k(ranked, gt({{5}}), 5) == 0.0);
  CHECK(recall_at_k(ranked, gt({{5}}), 10) == 100.0);

  // Ties go to the smaller index.
  const Matrix tied = Matrix::from_rows({{0.5, 0.5}});
  CHECK(recall_at_k(tied, gt({{0}}), 1) == 100.0);
  CHECK(recall_at_k(tied, gt({{1}}), 1) == 0.0);

  CHECK_THROWS_AS(recall_at_k(one, gt({{}}), 1), DataError);
  CHECK_THROWS_AS(recall_at_k(one, gt({{0}, {1}}), 1), DataError);
  CHECK_THROWS_AS(recall_at_k(one, gt({{7}}), 1), DataError);
  CHECK_THROWS_AS(recall_at_k(one, gt({{0}}), 0), ArgumentError);
}

TEST_CASE("recall properties") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix s = rng.uniform_matrix(20, 20, -1, 1);
    GroundTruth truth;
    for (std::size_t q = 0; q < 20; ++q) truth.relevant.push_back({rng.below(20)});

    double previous = 0.0;
    for (std::size_t k = 1; k <= 20; ++k) {
      const double r = recall_at_k(s, truth, k);
      CHECK(r >= previous);
      CHECK(r == oracle::recall(s, truth.relevant, k));
      previous = r;
    }
    CHECK(previous == 100.0);

    Matrix transformed = s;
    for (double& x : transformed.data()) x = std::exp(3.0 * x) + 2.0;
    for (std::size_t k : {1, 5, 10}) CHECK(recall_at_k(transformed, truth, k) == recall_at_k(s, truth, k));
  }
}

TEST_CASE("evaluate") {
  // Three images, two captions each; embeddings are exact matches.
  const Matrix images = l2_normalize_rows(Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  const Matrix texts = l2_normalize_rows(
      Matrix::from_rows({{1, 0.1, 0}, {1, 0, 0.1}, {0.1, 1, 0}, {0, 1, 0.1}, {0.1, 0, 1}, {0, 0.1, 1}}));
  const std::vector<std::size_t> caption_image{0, 0, 1, 1, 2, 2};
  const RetrievalResult r = evaluate(texts, images, caption_image);
  CHECK(r.rsum == 600.0);
  CHECK(r.ir_r1 == 100.0);
  CHECK(r.cr_r1 == 100.0);
  CHECK(r.rsum == r.ir_r1 + r.ir_r5 + r.ir_r10 + r.cr_r1 + r.cr_r5 + r.cr_r10);

  SUBCASE("candidate permutation does not change the result") {
    Rng rng(5);
    const Matrix t = l2_normalize_rows(rng.normal_matrix(30, 8));
    const Matrix v = l2_normalize_rows(rng.normal_matrix(10, 8));
    std::vector<std::size_t> ci(30);
    for (std::size_t i = 0; i < 30; ++i) ci[i] = i / 3;
    const RetrievalResult base = evaluate(t, v, ci);

    std::vector<std::size_t> perm{3, 7, 0, 9, 1, 5, 2, 8, 6, 4};
    Matrix vp(10, 8);
    std::vector<std::size_t> where(10);
    for (std::size_t i = 0; i < 10; ++i) {
      std::copy(v.row(perm[i]).begin(), v.row(perm[i]).end(), vp.row(i).begin());
      where[perm[i]] = i;
    }
    std::vector<std::size_t> cip(30);
    for (std::size_t i = 0; i < 30; ++i) cip[i] = where[ci[i]];
    CHECK(evaluate(t, vp, cip) == base);
  }

  SUBCASE("random embeddings are near chance") {
    Rng rng(6);
    const Matrix t = l2_normalize_rows(rng.normal_matrix(1000, 32));
    const Matrix v = l2_normalize_rows(rng.normal_matrix(200, 32));
    std::vector<std::size_t> ci(1000);
    for (std::size_t i = 0; i < 1000; ++i) ci[i] = i / 5;
    const RetrievalResult rr = evaluate(t, v, ci);
    CHECK(rr.ir_r1 < 20.0);
    CHECK(rr.cr_r1 < 20.0);
  }

  SUBCASE("folds") {
    const RetrievalResult f1 = evaluate_folds(texts, images, caption_image, 1);
    CHECK(f1 == r);
    const RetrievalResult f3 = evaluate_folds(texts, images, caption_image, 3);
    CHECK(f3.rsum == 600.0);
    CHECK_THROWS_AS(evaluate_folds(texts, images, caption_image, 4), ConfigError);
  }
}

TEST_CASE("serialisation") {
  RetrievalResult r{1, 2, 3, 4, 5, 6, 21};
  const std::string json = r.to_json();
  CHECK(json.find("\"ir_r1\"") < json.find("\"rsum\""));
  CHECK(RetrievalResult::csv_header() == "ir_r1,ir_r5,ir_r10,cr_r1,cr_r5,cr_r10,rsum");
  CHECK(r.to_csv_row().rfind("1,2,3,4,5,6,21", 0) == 0);
}

TEST_CASE("ensemble similarity") {
  const Matrix a = Matrix::from_rows({{0, 1}});
  const Matrix b = Matrix::from_rows({{1, 0}});
  std::vector<Matrix> one{a};
  CHECK(ensemble_similarity(one) == a);
  std::vector<Matrix> same{a, a};
  CHECK(ensemble_similarity(same) == a);
  std::vector<Matrix> mixed{a, b};
  CHECK(ensemble_similarity(mixed) == Matrix::from_rows({{0.5, 0.5}}));
  std::vector<Matrix> bad{a, Matrix(2, 2)};
  CHECK_THROWS_AS(ensemble_similarity(bad), DimensionError);
  CHECK_THROWS_AS(ensemble_similarity(std::vector<Matrix>{}), ArgumentError);
}
