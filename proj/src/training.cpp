#include "adret/training.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "adret/adam.hpp"
#include "adret/error.hpp"
#include "adret/ops.hpp"
#include "adret/random.hpp"

namespace adret {

TrainConfig TrainConfig::desk_defaults() {
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 10;
  return cfg;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw ConfigError("train.lr_decay_factor must be in (0, 1]");
  }
  if (lr_decay_every == 0) throw ConfigError("train.lr_decay_every must be >= 1");
  loss.validate();
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr * std::pow(cfg.lr_decay_factor, static_cast<double>(epoch / cfg.lr_decay_every));
}

std::string TrainLog::to_csv() const {
  std::string out = "epoch,iter,loss,gamma_align,gamma_uniform,k,lr\n";
  for (const auto& r : iterations) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.epoch, r.iter, r.loss, r.gamma_align,
                       r.gamma_uniform, r.k ? fmt::format("{}", *r.k) : std::string(), r.lr);
  }
  for (const auto& v : validation) out += fmt::format("{},-1,{},,,,\n", v.epoch, v.result.rsum);
  return out;
}

std::vector<IterationRecord> TrainLog::epoch_records(std::size_t epoch) const {
  std::vector<IterationRecord> out;
  for (const auto& r : iterations)
    if (r.epoch == epoch) out.push_back(r);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> k_history(const TrainLog& log) {
  if (log.mode != LossMode::infonce_adaptive) {
    throw ConfigError(fmt::format("k_history: log was recorded in {} mode, not infonce-adaptive",
                                  to_string(log.mode)));
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(log.iterations.size());
  for (const auto& r : log.iterations) {
    if (!r.k) throw DataError(fmt::format("k_history: iteration {} has no K", r.iter));
    out.emplace_back(r.iter, *r.k);
  }
  return out;
}

Matrix encode_all(const std::vector<RawInstance>& instances, const EncoderParams& params) {
  Matrix out(instances.size(), params.embed_dim());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Vector e = encode(instances[i].features, params);
    std::copy(e.begin(), e.end(), out.row(i).begin());
  }
  return out;
}

RetrievalResult evaluate_model(const Model& model, const Corpus& corpus, std::size_t folds) {
  const Matrix text = encode_all(corpus.texts, model.text);
  const Matrix image = encode_all(corpus.images, model.visual);
  return evaluate_folds(text, image, corpus.caption_image(), folds);
}

TrainResult train(const Corpus& corpus, Model model, const TrainConfig& cfg,
                  const Corpus* validation, const EpochCallback& on_epoch) {
  cfg.validate();
  model.visual.validate();
  model.text.validate();
  if (corpus.images.empty()) throw DataError("train: empty corpus");
  if (cfg.batch_size > corpus.images.size()) {
    throw ConfigError(fmt::format("train.batch_size {} exceeds the {} training images",
                                  cfg.batch_size, corpus.images.size()));
  }
  const auto captions = corpus.captions_by_image();
  for (std::size_t g = 0; g < captions.size(); ++g) {
    if (captions[g].empty()) throw DataError(fmt::format("image {} has no caption", g));
  }

  TrainResult result{std::move(model), TrainLog{cfg.loss.mode, {}, {}}};
  if (cfg.epochs == 0) return result;

  Model& m = result.model;
  auto params = m.parameters();
  AdamState adam(params);
  Rng rng(cfg.seed);
  const std::size_t d = m.text.embed_dim();

  if (validation) result.log.validation.push_back({0, evaluate_model(m, *validation)});

  std::vector<std::size_t> order(corpus.images.size());
  std::size_t iter = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch - 1, cfg);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    std::vector<std::size_t> caption_of(order.size());
    for (std::size_t p = 0; p < order.size(); ++p) {
      const auto& options = captions[order[p]];
      caption_of[p] = options[rng.below(options.size())];
    }

    for (std::size_t start = 0; start + 1 < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      Matrix text(b, d), image(b, d);
      for (std::size_t i = 0; i < b; ++i) {
        const Vector t = encode(corpus.texts[caption_of[start + i]].features, m.text);
        const Vector v = encode(corpus.images[order[start + i]].features, m.visual);
        std::copy(t.begin(), t.end(), text.row(i).begin());
        std::copy(v.begin(), v.end(), image.row(i).begin());
      }
      const Matrix s = cosine_sim_matrix(text, image);
      const BatchLoss loss = compute_loss(s, cfg.loss);
      if (!std::isfinite(loss.loss)) {
        throw DivergenceError(fmt::format("non-finite loss at iteration {}", iter));
      }

      const BinaryGrad d_emb = cosine_sim_matrix_vjp(text, image, loss.grad);
      ModelGrads grads = ModelGrads::zeros_like(m);
      for (std::size_t i = 0; i < b; ++i) {
        encode_vjp(corpus.texts[caption_of[start + i]].features, m.text, d_emb.lhs.row(i),
                   grads.text);
        encode_vjp(corpus.images[order[start + i]].features, m.visual, d_emb.rhs.row(i),
                   grads.visual);
      }
      try {
        adam.step(params, grads.tensors(), lr);
      } catch (const DivergenceError& e) {
        throw DivergenceError(fmt::format("{} at iteration {}", e.what(), iter));
      }

      result.log.iterations.push_back(
          {epoch, iter, loss.loss, loss.gamma_align, loss.gamma_uniform, loss.k, lr});
      ++iter;
    }
    if (validation) result.log.validation.push_back({epoch, evaluate_model(m, *validation)});
    if (on_epoch) on_epoch(epoch, result.log);
  }
  return result;
}

}  // namespace adret
