#include <cmath>

#include "doctest.h"

#include "adret/adam.hpp"
#include "adret/error.hpp"
#include "adret/training.hpp"

using namespace adret;

namespace {

CorpusSplits small_splits(std::uint64_t seed) {
  SyntheticCorpusConfig cfg;
  cfg.seed = seed;
  return generate_splits(cfg, 128, 40, 40);
}

Model small_model(std::uint64_t seed) {
  return Model::init(32, 32, 16, PoolingSpec{}, PoolingSpec{}, seed);
}

TrainConfig small_train(std::size_t epochs) {
  TrainConfig cfg = TrainConfig::desk_defaults();
  cfg.batch_size = 32;
  cfg.epochs = epochs;
  return cfg;
}

}  // namespace

TEST_CASE("Adam") {
  Matrix p(1, 1, 0.0);
  Matrix g(1, 1, 1.0);
  std::vector<NamedTensor> params{{"p", &p}};
  std::vector<NamedTensor> grads{{"p", &g}};
  AdamState adam(params);
  adam.step(params, grads, 5e-4);
  CHECK(p(0, 0) == doctest::Approx(-5e-4).epsilon(1e-6));
  CHECK(adam.steps() == 1);

  Matrix q(2, 2, 3.0);
  Matrix zero(2, 2, 0.0);
  std::vector<NamedTensor> qp{{"q", &q}};
  std::vector<NamedTensor> qg{{"q", &zero}};
  AdamState still(qp);
  for (int i = 0; i < 10; ++i) still.step(qp, qg, 1e-2);
  CHECK(q == Matrix(2, 2, 3.0));

  Matrix nan_grad(1, 1, NAN);
  std::vector<NamedTensor> bad{{"p", &nan_grad}};
  try {
    adam.step(params, bad, 5e-4);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("parameter p") != std::string::npos);
  }
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  CHECK(lr_at(0, cfg) == 5e-4);
  CHECK(lr_at(14, cfg) == 5e-4);
  CHECK(lr_at(15, cfg) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(lr_at(30, cfg) == doctest::Approx(5e-6).epsilon(1e-12));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr_decay_factor = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(TrainConfig::desk_defaults().batch_size == 64);
  CHECK(TrainConfig::desk_defaults().epochs == 10);
}

TEST_CASE("zero epochs leave the model untouched") {
  const auto s = small_splits(1);
  const Model init = small_model(4);
  const TrainResult r = train(s.train, init, small_train(0));
  CHECK(r.log.iterations.empty());
  CHECK(r.model.visual.w_proj == init.visual.w_proj);
  CHECK(r.model.text.pool.w_tok == init.text.pool.w_tok);
}

TEST_CASE("training logs, learns and is deterministic") {
  const auto s = small_splits(2);
  TrainConfig cfg = small_train(3);
  const TrainResult a = train(s.train, small_model(5), cfg, &s.validation);
  const TrainResult b = train(s.train, small_model(5), cfg, &s.validation);
  CHECK(a.log == b.log);
  CHECK(a.model.visual.w_proj == b.model.visual.w_proj);
  CHECK(a.log.to_csv() == b.log.to_csv());

  REQUIRE(a.log.iterations.size() == 12);
  for (std::size_t i = 0; i < a.log.iterations.size(); ++i) {
    const auto& rec = a.log.iterations[i];
    CHECK(rec.iter == i);
    CHECK(rec.epoch == i / 4 + 1);
    REQUIRE(rec.k.has_value());
    CHECK(*rec.k >= 1);
    CHECK(*rec.k <= 31);
    CHECK(rec.gamma_align >= 0.0);
    CHECK(rec.gamma_align <= 1.0);
  }
  REQUIRE(a.log.validation.size() == 4);
  CHECK(a.log.validation.front().epoch == 0);
  CHECK(a.log.validation.back().result.rsum > a.log.validation.front().result.rsum);

  const auto history = k_history(a.log);
  CHECK(history.size() == a.log.iterations.size());
  CHECK(history[3].first == 3);

  const std::string csv = a.log.to_csv();
  CHECK(csv.rfind("epoch,iter,loss,gamma_align,gamma_uniform,k,lr\n", 0) == 0);
  CHECK(csv.find("\n0,-1,") != std::string::npos);

  cfg.seed = 99;
  CHECK_FALSE(train(s.train, small_model(5), cfg).log == a.log);
}

TEST_CASE("hard triplet mode logs no K") {
  const auto s = small_splits(3);
  TrainConfig cfg = small_train(1);
  cfg.loss.mode = LossMode::hard_triplet;
  const TrainResult r = train(s.train, small_model(1), cfg);
  for (const auto& rec : r.log.iterations) CHECK_FALSE(rec.k.has_value());
  CHECK_THROWS_AS(k_history(r.log), ConfigError);
  CHECK(r.log.to_csv().find(",,0.0005") != std::string::npos);
}

TEST_CASE("k_history") {
  TrainLog log;
  CHECK(k_history(log).empty());
  for (std::size_t k : {63, 40, 12}) {
    IterationRecord rec;
    rec.iter = log.iterations.size();
    rec.k = k;
    log.iterations.push_back(rec);
  }
  const auto h = k_history(log);
  CHECK(h == std::vector<std::pair<std::size_t, std::size_t>>{{0, 63}, {1, 40}, {2, 12}});
}

TEST_CASE("first-epoch loss trends down on the desk corpus") {
  SyntheticCorpusConfig corpus;
  const auto s = generate_splits(corpus, 1000, 1, 1);
  TrainConfig cfg = TrainConfig::desk_defaults();
  cfg.epochs = 1;
  const TrainResult r =
      train(s.train, Model::init(32, 32, 32, PoolingSpec{}, PoolingSpec{}, 0), cfg);
  const auto& it = r.log.iterations;
  const double n = static_cast<double>(it.size());
  double mx = 0, my = 0;
  for (const auto& rec : it) {
    mx += rec.iter;
    my += rec.loss;
  }
  mx /= n;
  my /= n;
  double cov = 0, var = 0;
  for (const auto& rec : it) {
    cov += (rec.iter - mx) * (rec.loss - my);
    var += (rec.iter - mx) * (rec.iter - mx);
  }
  CHECK(cov / var < 0.0);
}

TEST_CASE("batch larger than the corpus is rejected") {
  const auto s = small_splits(4);
  TrainConfig cfg = small_train(1);
  cfg.batch_size = 500;
  CHECK_THROWS_AS(train(s.train, small_model(1), cfg), ConfigError);
}
