#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adret/matrix.hpp"

namespace adret {

// S is always |B| x |B| with rows = text anchors, columns = images and the
// positive pairs on the diagonal.

struct LossValue {
  double loss = 0.0;
  Matrix grad;  // d loss / d S
};

enum class LossMode { hard_triplet, infonce_adaptive, infonce_fixed };

std::string_view to_string(LossMode mode);
LossMode parse_loss_mode(std::string_view text);

struct LossConfig {
  double margin = 0.2;
  double temperature = 0.05;
  LossMode mode = LossMode::infonce_adaptive;
  std::size_t fixed_k = 1;  // only read in infonce_fixed mode

  void validate() const;
};

struct BatchMaturity {
  double gamma_align = 0.0;    // clamped to [0, 1]
  double gamma_uniform = 0.0;  // clamped to [0, 1]
  std::size_t k_selected = 1;
};

struct NegativeSelection {
  // text_to_image[i]: image columns used as negatives for text anchor i.
  std::vector<std::vector<std::size_t>> text_to_image;
  // image_to_text[j]: text rows used as negatives for image anchor j.
  std::vector<std::vector<std::size_t>> image_to_text;
};

// Sum over the batch of both hinge terms against the hardest in-batch negative.
LossValue hard_triplet_loss(const Matrix& s, double margin);

double alignment(const Matrix& s);
double uniformity(const Matrix& s);

std::size_t adaptive_k(double gamma_align, double gamma_uniform, std::size_t batch_size);

// Hardest-K negatives per anchor in both directions; ties go to the smaller index.
NegativeSelection select_negatives(const Matrix& s, std::size_t k);

// Sum of both directions, each averaged over the batch. The denominator holds
// the positive term plus the selected negatives.
LossValue info_nce_loss(const Matrix& s, const NegativeSelection& selection, double temperature);

struct AdOptValue {
  double loss = 0.0;
  BatchMaturity maturity;
  Matrix grad;
};

// Batch statistics and K come from S itself and carry no gradient.
AdOptValue adopt_loss(const Matrix& s, double temperature);

struct BatchLoss {
  double loss = 0.0;
  Matrix grad;
  double gamma_align = 0.0;
  double gamma_uniform = 0.0;
  std::optional<std::size_t> k;  // set only in adaptive mode
};

BatchLoss compute_loss(const Matrix& s, const LossConfig& cfg);

}  // namespace adret
