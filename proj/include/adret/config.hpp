#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "adret/corpus.hpp"
#include "adret/pooling.hpp"
#include "adret/training.hpp"

namespace adret {

// JSON experiment file. Every key is optional except "output_dir"; unknown
// keys are rejected so typos surface as errors naming the field.
//
// {
//   "output_dir": "runs/desk",
//   "corpus_dir": "runs/desk/corpus",            // default: <output_dir>/corpus
//   "corpus": {"train_groups": 1000, "val_groups": 200, "test_groups": 200,
//              "captions_per_image": 5, "latent_dim": 16, "visual_dim": 32,
//              "text_dim": 32, "visual_len": [4, 12], "text_len": [5, 15],
//              "noise_scale": 0.1, "seed": 7},
//   "model":  {"embed_dim": 32, "visual_pooling": "adpool", "text_pooling": "adpool",
//              "init_seed": 11},
//   "train":  {"batch_size": 64, "epochs": 10, "lr": 5e-4, "lr_decay_every": 15,
//              "lr_decay_factor": 0.1, "loss": "infonce-adaptive", "k": 8,
//              "margin": 0.2, "temperature": 0.05, "seed": 3},
//   "eval":   {"folds": 1}
// }
struct ExperimentConfig {
  SyntheticCorpusConfig corpus;
  std::size_t train_groups = 1000;
  std::size_t val_groups = 200;
  std::size_t test_groups = 200;
  std::size_t embed_dim = 32;
  PoolingSpec visual_pooling{PoolMethod::adpool};
  PoolingSpec text_pooling{PoolMethod::adpool};
  std::uint64_t init_seed = 0;
  TrainConfig train = TrainConfig::desk_defaults();
  std::size_t eval_folds = 1;
  std::filesystem::path output_dir;
  std::filesystem::path corpus_dir;  // empty: <output_dir>/corpus

  static ExperimentConfig desk_defaults();
  static ExperimentConfig parse(const std::string& json_text);
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string to_json() const;

  std::filesystem::path resolved_corpus_dir() const;
  void validate() const;
};

}  // namespace adret
