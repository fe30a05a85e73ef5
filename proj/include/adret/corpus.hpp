#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "adret/matrix.hpp"

namespace adret {

enum class Modality { visual, text };

struct RawInstance {
  Modality modality = Modality::visual;
  Matrix features;  // sequence length x input width
  std::string id;
  std::size_t group_id = 0;  // index of the image this instance belongs to
};

struct LengthRange {
  std::size_t min = 1;
  std::size_t max = 1;
};

struct SyntheticCorpusConfig {
  std::size_t num_groups = 1000;
  std::size_t captions_per_image = 5;
  std::size_t latent_dim = 16;
  std::size_t visual_dim = 32;
  std::size_t text_dim = 32;
  LengthRange visual_len{4, 12};
  LengthRange text_len{5, 15};
  double noise_scale = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// images[g] is group g; texts[i].group_id indexes into images.
struct Corpus {
  std::vector<RawInstance> images;
  std::vector<RawInstance> texts;

  std::vector<std::size_t> caption_image() const;
  std::vector<std::vector<std::size_t>> captions_by_image() const;
};

// For every group a latent z ~ N(0, I); every row of the image is A_v z plus
// noise, every row of each caption is A_t z plus independent noise. The mixing
// matrices are the first draws from the seed.
Corpus generate_corpus(const SyntheticCorpusConfig& cfg);

struct CorpusSplits {
  Corpus train;
  Corpus validation;
  Corpus test;
};

// One corpus of train+val+test groups (shared mixing matrices) cut in order.
CorpusSplits generate_splits(SyntheticCorpusConfig cfg, std::size_t train_groups,
                             std::size_t val_groups, std::size_t test_groups);

}  // namespace adret
