#include "adret/corpus.hpp"

#include <cmath>

#include <fmt/format.h>

#include "adret/error.hpp"
#include "adret/ops.hpp"
#include "adret/random.hpp"

namespace adret {

void SyntheticCorpusConfig::validate() const {
  if (num_groups == 0) throw ConfigError("corpus: num_groups must be >= 1");
  if (captions_per_image == 0) throw ConfigError("corpus.captions_per_image must be >= 1");
  if (latent_dim == 0) throw ConfigError("corpus.latent_dim must be >= 1");
  if (visual_dim == 0) throw ConfigError("corpus.visual_dim must be >= 1");
  if (text_dim == 0) throw ConfigError("corpus.text_dim must be >= 1");
  if (visual_len.min == 0 || visual_len.min > visual_len.max) {
    throw ConfigError("corpus.visual_len must satisfy 1 <= min <= max");
  }
  if (text_len.min == 0 || text_len.min > text_len.max) {
    throw ConfigError("corpus.text_len must satisfy 1 <= min <= max");
  }
  if (!(noise_scale >= 0.0)) throw ConfigError("corpus.noise_scale must be >= 0");
}

std::vector<std::size_t> Corpus::caption_image() const {
  std::vector<std::size_t> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(t.group_id);
  return out;
}

std::vector<std::vector<std::size_t>> Corpus::captions_by_image() const {
  std::vector<std::vector<std::size_t>> out(images.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].group_id >= images.size()) {
      throw DataError(fmt::format("caption {} points at missing image {}", texts[i].id,
                                  texts[i].group_id));
    }
    out[texts[i].group_id].push_back(i);
  }
  return out;
}

namespace {

Matrix noisy_rows(Rng& rng, std::span<const double> mean, std::size_t rows, double noise) {
  Matrix m(rows, mean.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < mean.size(); ++c) m(r, c) = mean[c] + noise * rng.normal();
  return m;
}

}  // namespace

Corpus generate_corpus(const SyntheticCorpusConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const double mix_scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  // latent_dim x d so that a latent row vector maps with one matmul.
  const Matrix mix_visual = rng.normal_matrix(cfg.latent_dim, cfg.visual_dim, mix_scale);
  const Matrix mix_text = rng.normal_matrix(cfg.latent_dim, cfg.text_dim, mix_scale);

  Corpus corpus;
  corpus.images.reserve(cfg.num_groups);
  corpus.texts.reserve(cfg.num_groups * cfg.captions_per_image);
  for (std::size_t g = 0; g < cfg.num_groups; ++g) {
    const Matrix z = rng.normal_matrix(1, cfg.latent_dim);
    const Matrix visual_mean = matmul(z, mix_visual);
    const Matrix text_mean = matmul(z, mix_text);

    const std::size_t n = rng.between(cfg.visual_len.min, cfg.visual_len.max);
    corpus.images.push_back({Modality::visual,
                             noisy_rows(rng, visual_mean.data(), n, cfg.noise_scale),
                             fmt::format("v{}", g), g});
    for (std::size_t c = 0; c < cfg.captions_per_image; ++c) {
      const std::size_t m = rng.between(cfg.text_len.min, cfg.text_len.max);
      corpus.texts.push_back({Modality::text, noisy_rows(rng, text_mean.data(), m, cfg.noise_scale),
                              fmt::format("t{}_{}", g, c), g});
    }
  }
  return corpus;
}

CorpusSplits generate_splits(SyntheticCorpusConfig cfg, std::size_t train_groups,
                             std::size_t val_groups, std::size_t test_groups) {
  if (train_groups == 0 || val_groups == 0 || test_groups == 0) {
    throw ConfigError("corpus: every split needs at least one group");
  }
  cfg.num_groups = train_groups + val_groups + test_groups;
  Corpus all = generate_corpus(cfg);

  auto slice = [&](std::size_t first, std::size_t count) {
    Corpus out;
    for (std::size_t g = first; g < first + count; ++g) {
      RawInstance img = all.images[g];
      img.group_id = g - first;
      out.images.push_back(std::move(img));
    }
    for (const auto& t : all.texts) {
      if (t.group_id >= first && t.group_id < first + count) {
        RawInstance txt = t;
        txt.group_id = t.group_id - first;
        out.texts.push_back(std::move(txt));
      }
    }
    return out;
  };
  return {slice(0, train_groups), slice(train_groups, val_groups),
          slice(train_groups + val_groups, test_groups)};
}

}  // namespace adret
