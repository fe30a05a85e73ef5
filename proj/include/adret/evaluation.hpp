#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "adret/matrix.hpp"

namespace adret {

// relevant[q] lists the candidate indices that count as hits for query q.
struct GroundTruth {
  std::vector<std::vector<std::size_t>> relevant;
};

// Percent (0..100). "Image retrieval" ranks captions for each image query;
// "caption retrieval" ranks images for each caption query.
struct RetrievalResult {
  double ir_r1 = 0.0, ir_r5 = 0.0, ir_r10 = 0.0;
  double cr_r1 = 0.0, cr_r5 = 0.0, cr_r10 = 0.0;
  double rsum = 0.0;

  std::string to_json() const;
  static std::string csv_header();
  std::string to_csv_row() const;

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

// Percent of queries (rows) whose top-k candidates, ranked by descending score
// with ties going to the smaller index, contain a relevant candidate.
double recall_at_k(const Matrix& scores, const GroundTruth& truth, std::size_t k);

// `text_image` is captions x images; caption_image[i] is the image of caption i.
RetrievalResult evaluate_similarity(const Matrix& text_image,
                                    std::span<const std::size_t> caption_image);
RetrievalResult evaluate(const Matrix& text_emb, const Matrix& image_emb,
                         std::span<const std::size_t> caption_image);

// Splits the images into `folds` contiguous blocks (captions follow their
// image), evaluates each block on its own and averages the results.
RetrievalResult evaluate_folds(const Matrix& text_emb, const Matrix& image_emb,
                               std::span<const std::size_t> caption_image, std::size_t folds);

Matrix ensemble_similarity(std::span<const Matrix> matrices);

}  // namespace adret
