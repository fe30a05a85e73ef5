#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adret/corpus.hpp"
#include "adret/encoder.hpp"
#include "adret/evaluation.hpp"
#include "adret/objectives.hpp"

namespace adret {

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 25;
  double lr = 5e-4;
  std::size_t lr_decay_every = 15;
  double lr_decay_factor = 0.1;
  LossConfig loss;
  std::uint64_t seed = 0;

  // Batch 64 and 10 epochs: sized for the synthetic desk corpus.
  static TrainConfig desk_defaults();
  void validate() const;
};

// Learning rate used during 0-based epoch `epoch`.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct IterationRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t iter = 0;   // 0-based, global
  double loss = 0.0;
  double gamma_align = 0.0;
  double gamma_uniform = 0.0;
  std::optional<std::size_t> k;
  double lr = 0.0;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct ValidationRecord {
  std::size_t epoch = 0;  // 0 = before the first update
  RetrievalResult result;

  friend bool operator==(const ValidationRecord&, const ValidationRecord&) = default;
};

struct TrainLog {
  LossMode mode = LossMode::infonce_adaptive;
  std::vector<IterationRecord> iterations;
  std::vector<ValidationRecord> validation;

  // Header `epoch,iter,loss,gamma_align,gamma_uniform,k,lr`; validation rows
  // follow the iteration rows as `epoch,-1,rsum,,,,`.
  std::string to_csv() const;
  std::vector<IterationRecord> epoch_records(std::size_t epoch) const;

  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

std::vector<std::pair<std::size_t, std::size_t>> k_history(const TrainLog& log);

// Rows are unit embeddings of the instances, in order.
Matrix encode_all(const std::vector<RawInstance>& instances, const EncoderParams& params);
RetrievalResult evaluate_model(const Model& model, const Corpus& corpus, std::size_t folds = 1);

struct TrainResult {
  Model model;
  TrainLog log;
};

using EpochCallback = std::function<void(std::size_t epoch, const TrainLog&)>;

// Each epoch: seeded shuffle of the images, one seeded caption per image,
// consecutive batches (a trailing batch of one pair is dropped), loss on the
// batch similarity matrix, backprop through both towers and an Adam step.
// When `validation` is given its RSUM is recorded before training and after
// every epoch.
TrainResult train(const Corpus& corpus, Model model, const TrainConfig& cfg,
                  const Corpus* validation = nullptr, const EpochCallback& on_epoch = {});

}  // namespace adret
