#include "adret/evaluation.hpp"

#include <limits>

#include <fmt/format.h>
#include "json.hpp"

#include "adret/error.hpp"
#include "adret/ops.hpp"

namespace adret {
namespace {

// Number of candidates ranked ahead of `c` in row q.
std::size_t rank_of(const Matrix& scores, std::size_t q, std::size_t c) {
  const double sc = scores(q, c);
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < scores.cols(); ++j) {
    const double sj = scores(q, j);
    if (sj > sc || (sj == sc && j < c)) ++ahead;
  }
  return ahead;
}

GroundTruth image_to_captions(std::span<const std::size_t> caption_image, std::size_t images) {
  GroundTruth truth;
  truth.relevant.resize(images);
  for (std::size_t i = 0; i < caption_image.size(); ++i) {
    if (caption_image[i] >= images) {
      throw DataError(fmt::format("caption {} refers to image {} of {}", i, caption_image[i], images));
    }
    truth.relevant[caption_image[i]].push_back(i);
  }
  return truth;
}

}  // namespace

double recall_at_k(const Matrix& scores, const GroundTruth& truth, std::size_t k) {
  if (k < 1) throw ArgumentError("recall_at_k: K must be >= 1");
  if (!scores.all_finite()) throw ArgumentError("recall_at_k: non-finite scores");
  if (truth.relevant.size() != scores.rows()) {
    throw DataError(fmt::format("recall_at_k: {} queries but ground truth covers {}", scores.rows(),
                                truth.relevant.size()));
  }
  if (scores.rows() == 0) throw DataError("recall_at_k: no queries");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < scores.rows(); ++q) {
    const auto& rel = truth.relevant[q];
    if (rel.empty()) throw DataError(fmt::format("recall_at_k: query {} has no relevant candidate", q));
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (std::size_t c : rel) {
      if (c >= scores.cols()) {
        throw DataError(fmt::format("recall_at_k: relevant candidate {} not in index", c));
      }
      best = std::min(best, rank_of(scores, q, c));
    }
    if (best < k) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(scores.rows());
}

RetrievalResult evaluate_similarity(const Matrix& text_image,
                                    std::span<const std::size_t> caption_image) {
  if (caption_image.size() != text_image.rows()) {
    throw DataError(fmt::format("evaluate: {} captions but {} truth entries", text_image.rows(),
                                caption_image.size()));
  }
  GroundTruth caption_truth;
  for (std::size_t img : caption_image) caption_truth.relevant.push_back({img});
  const GroundTruth image_truth = image_to_captions(caption_image, text_image.cols());
  const Matrix image_text = transpose(text_image);

  RetrievalResult r;
  r.ir_r1 = recall_at_k(image_text, image_truth, 1);
  r.ir_r5 = recall_at_k(image_text, image_truth, 5);
  r.ir_r10 = recall_at_k(image_text, image_truth, 10);
  r.cr_r1 = recall_at_k(text_image, caption_truth, 1);
  r.cr_r5 = recall_at_k(text_image, caption_truth, 5);
  r.cr_r10 = recall_at_k(text_image, caption_truth, 10);
  r.rsum = r.ir_r1 + r.ir_r5 + r.ir_r10 + r.cr_r1 + r.cr_r5 + r.cr_r10;
  return r;
}

RetrievalResult evaluate(const Matrix& text_emb, const Matrix& image_emb,
                         std::span<const std::size_t> caption_image) {
  return evaluate_similarity(cosine_sim_matrix(text_emb, image_emb), caption_image);
}

RetrievalResult evaluate_folds(const Matrix& text_emb, const Matrix& image_emb,
                               std::span<const std::size_t> caption_image, std::size_t folds) {
  const std::size_t images = image_emb.rows();
  if (folds < 1 || folds > images) {
    throw ConfigError(fmt::format("eval.folds must be in [1, {}]", images));
  }
  if (folds == 1) return evaluate(text_emb, image_emb, caption_image);

  RetrievalResult avg;
  const std::size_t per_fold = images / folds;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * per_fold;
    const std::size_t hi = f + 1 == folds ? images : lo + per_fold;
    Matrix img(hi - lo, image_emb.cols());
    for (std::size_t i = lo; i < hi; ++i)
      std::copy(image_emb.row(i).begin(), image_emb.row(i).end(), img.row(i - lo).begin());
    std::vector<std::size_t> rows;
    std::vector<std::size_t> truth;
    for (std::size_t t = 0; t < caption_image.size(); ++t) {
      if (caption_image[t] >= lo && caption_image[t] < hi) {
        rows.push_back(t);
        truth.push_back(caption_image[t] - lo);
      }
    }
    Matrix txt(rows.size(), text_emb.cols());
    for (std::size_t k = 0; k < rows.size(); ++k)
      std::copy(text_emb.row(rows[k]).begin(), text_emb.row(rows[k]).end(), txt.row(k).begin());
    const RetrievalResult r = evaluate(txt, img, truth);
    avg.ir_r1 += r.ir_r1;
    avg.ir_r5 += r.ir_r5;
    avg.ir_r10 += r.ir_r10;
    avg.cr_r1 += r.cr_r1;
    avg.cr_r5 += r.cr_r5;
    avg.cr_r10 += r.cr_r10;
  }
  const double n = static_cast<double>(folds);
  for (double* v : {&avg.ir_r1, &avg.ir_r5, &avg.ir_r10, &avg.cr_r1, &avg.cr_r5, &avg.cr_r10})
    *v /= n;
  avg.rsum = avg.ir_r1 + avg.ir_r5 + avg.ir_r10 + avg.cr_r1 + avg.cr_r5 + avg.cr_r10;
  return avg;
}

Matrix ensemble_similarity(std::span<const Matrix> matrices) {
  if (matrices.empty()) throw ArgumentError("ensemble_similarity: no matrices");
  if (matrices.size() == 1) return matrices.front();
  Matrix out(matrices.front().rows(), matrices.front().cols());
  for (const auto& m : matrices) {
    if (m.rows() != out.rows() || m.cols() != out.cols()) {
      throw DimensionError(fmt::format("ensemble_similarity: shape {} vs {}", m.shape_string(),
                                       out.shape_string()));
    }
    add_in_place(out, m);
  }
  const double n = static_cast<double>(matrices.size());
  for (double& x : out.data()) x /= n;
  return out;
}

std::string RetrievalResult::to_json() const {
  nlohmann::ordered_json j;
  j["ir_r1"] = ir_r1;
  j["ir_r5"] = ir_r5;
  j["ir_r10"] = ir_r10;
  j["cr_r1"] = cr_r1;
  j["cr_r5"] = cr_r5;
  j["cr_r10"] = cr_r10;
  j["rsum"] = rsum;
  return j.dump(2);
}

std::string RetrievalResult::csv_header() { return "ir_r1,ir_r5,ir_r10,cr_r1,cr_r5,cr_r10,rsum"; }

std::string RetrievalResult::to_csv_row() const {
  return fmt::format("{},{},{},{},{},{},{}", ir_r1, ir_r5, ir_r10, cr_r1, cr_r5, cr_r10, rsum);
}

}  // namespace adret
