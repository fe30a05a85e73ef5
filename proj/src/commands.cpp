#include "adret/commands.hpp"

#include <cstdlib>
#include <iostream>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "adret/config.hpp"
#include "adret/error.hpp"
#include "adret/feature_cache.hpp"
#include "adret/gradient_suite.hpp"
#include "adret/ops.hpp"
#include "adret/pooling.hpp"
#include "adret/training.hpp"
#include "json.hpp"

namespace adret::cli {
namespace fs = std::filesystem;

namespace {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> log = [] {
    auto l = spdlog::stderr_color_mt("adret");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("ADRET_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") {
      l->set_level(spdlog::level::err);
    } else if (level == "debug") {
      l->set_level(spdlog::level::debug);
    } else {
      l->set_level(spdlog::level::info);
    }
    return l;
  }();
  return log;
}

ExperimentConfig load_config(const Options& opts) {
  ExperimentConfig cfg;
  if (opts.config) {
    cfg = ExperimentConfig::load(*opts.config);
  } else {
    if (!opts.out) throw ConfigError("either --config or --out is required");
    cfg = ExperimentConfig::desk_defaults();
    cfg.output_dir = *opts.out;
  }
  if (opts.out) cfg.output_dir = *opts.out;
  if (opts.loss) cfg.train.loss.mode = *opts.loss;
  if (opts.k) cfg.train.loss.fixed_k = *opts.k;
  if (opts.epochs) cfg.train.epochs = *opts.epochs;
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError(fmt::format("cannot create output directory {}", dir.string()));
  }
}

Model fresh_model(const ExperimentConfig& cfg) {
  return Model::init(cfg.corpus.visual_dim, cfg.corpus.text_dim, cfg.embed_dim,
                     cfg.visual_pooling, cfg.text_pooling, cfg.init_seed);
}

void check_corpus_dims(const ExperimentConfig& cfg, const Corpus& corpus) {
  const auto& v = corpus.images.front().features;
  const auto& t = corpus.texts.front().features;
  if (v.cols() != cfg.corpus.visual_dim || t.cols() != cfg.corpus.text_dim) {
    throw ConfigError(fmt::format(
        "corpus has visual/text widths {}/{} but the config expects {}/{}", v.cols(), t.cols(),
        cfg.corpus.visual_dim, cfg.corpus.text_dim));
  }
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::ordered_json result_json(const RetrievalResult& r) {
  return nlohmann::ordered_json::parse(r.to_json());
}

}  // namespace

void cmd_generate(const Options& opts, std::ostream& out) {
  ExperimentConfig cfg = load_config(opts);
  if (opts.seed) cfg.corpus.seed = *opts.seed;
  const fs::path dir = cfg.resolved_corpus_dir();
  ensure_dir(dir);

  const CorpusSplits splits =
      generate_splits(cfg.corpus, cfg.train_groups, cfg.val_groups, cfg.test_groups);
  save_corpus(dir, "train", splits.train);
  save_corpus(dir, "val", splits.validation);
  save_corpus(dir, "test", splits.test);
  auto record = nlohmann::ordered_json::parse(cfg.to_json());
  write_file_atomic(dir / "corpus.json", record["corpus"].dump(2) + "\n");

  auto line = [&](const char* name, const Corpus& c) {
    out << fmt::format("{}: {} images, {} captions\n", name, c.images.size(), c.texts.size());
  };
  line("train", splits.train);
  line("val", splits.validation);
  line("test", splits.test);
  logger()->info("corpus written to {}", dir.string());
}

void cmd_train(const Options& opts, std::ostream& out) {
  ExperimentConfig cfg = load_config(opts);
  if (opts.seed) cfg.train.seed = *opts.seed;
  const fs::path corpus_dir = cfg.resolved_corpus_dir();
  const Corpus train_set = load_corpus(corpus_dir, "train");
  const Corpus val_set = load_corpus(corpus_dir, "val");
  const Corpus test_set = load_corpus(corpus_dir, "test");
  check_corpus_dims(cfg, train_set);
  ensure_dir(cfg.output_dir);

  logger()->info("training {} epochs, loss {}, batch {}", cfg.train.epochs,
                 to_string(cfg.train.loss.mode), cfg.train.batch_size);
  TrainResult result = train(
      train_set, fresh_model(cfg), cfg.train, &val_set, [](std::size_t epoch, const TrainLog& log) {
        logger()->info("epoch {}: validation rsum {:.2f}", epoch, log.validation.back().result.rsum);
      });

  save_model(cfg.output_dir / "params.bin", result.model);
  write_file_atomic(cfg.output_dir / "train_log.csv", result.log.to_csv());

  const RetrievalResult test = evaluate_model(result.model, test_set, cfg.eval_folds);
  nlohmann::ordered_json metrics;
  metrics["loss"] = std::string(to_string(cfg.train.loss.mode));
  metrics["epochs"] = cfg.train.epochs;
  metrics["iterations"] = result.log.iterations.size();
  auto& val = metrics["validation"] = nlohmann::ordered_json::array();
  for (const auto& v : result.log.validation) val.push_back({{"epoch", v.epoch}, {"rsum", v.result.rsum}});
  metrics["test"] = result_json(test);
  write_file_atomic(cfg.output_dir / "metrics.json", metrics.dump(2) + "\n");

  out << fmt::format("trained {} iterations; test rsum {}\n", result.log.iterations.size(),
                     test.rsum);
}

void cmd_eval(const Options& opts, std::ostream& out) {
  const ExperimentConfig cfg = load_config(opts);
  const Corpus test_set = load_corpus(cfg.resolved_corpus_dir(), "test");
  check_corpus_dims(cfg, test_set);
  ensure_dir(cfg.output_dir);

  std::vector<fs::path> param_files = opts.ensemble;
  if (param_files.empty()) param_files.push_back(opts.params.value_or(cfg.output_dir / "params.bin"));

  std::vector<Matrix> sims;
  std::vector<Matrix> text_embs, image_embs;
  for (const auto& path : param_files) {
    if (!fs::exists(path)) throw DataError(fmt::format("params file {} not found", path.string()));
    const std::string bytes = read_file(path);
    Model model = fresh_model(cfg);
    load_model(path, model);

    Matrix text, image;
    const fs::path cache_dir = cfg.output_dir / "embedding_cache";
    const std::string key = fmt::format(
        "{:016x}", fnv1a(cfg.visual_pooling.to_string() + "|" + cfg.text_pooling.to_string(),
                         fnv1a(bytes)));
    const fs::path text_cache = cache_dir / (key + "_text.bin");
    const fs::path image_cache = cache_dir / (key + "_image.bin");
    if (opts.cache_embeddings && fs::exists(text_cache) && fs::exists(image_cache)) {
      text = cache_read(text_cache).matrix;
      image = cache_read(image_cache).matrix;
      if (text.rows() != test_set.texts.size() || image.rows() != test_set.images.size()) {
        throw DataError(fmt::format("embedding cache {} does not match the test split", key));
      }
      logger()->info("embedding cache hit for {}", path.string());
    } else {
      text = encode_all(test_set.texts, model.text);
      image = encode_all(test_set.images, model.visual);
      if (opts.cache_embeddings) {
        ensure_dir(cache_dir);
        std::vector<std::string> text_ids, image_ids;
        for (const auto& t : test_set.texts) text_ids.push_back(t.id);
        for (const auto& v : test_set.images) image_ids.push_back(v.id);
        cache_write(text_cache, text, text_ids);
        cache_write(image_cache, image, image_ids);
        logger()->info("embedding cache written for {}", path.string());
      }
    }
    sims.push_back(cosine_sim_matrix(text, image));
    text_embs.push_back(std::move(text));
    image_embs.push_back(std::move(image));
  }

  const auto caption_image = test_set.caption_image();
  const RetrievalResult result =
      sims.size() == 1 ? evaluate_folds(text_embs[0], image_embs[0], caption_image, cfg.eval_folds)
                       : evaluate_similarity(ensemble_similarity(sims), caption_image);
  if (sims.size() > 1 && cfg.eval_folds > 1) {
    logger()->warn("eval.folds is ignored for ensembles; scoring the full test split");
  }
  write_file_atomic(cfg.output_dir / "eval.json", result.to_json() + "\n");
  write_file_atomic(cfg.output_dir / "eval.csv",
                    RetrievalResult::csv_header() + "\n" + result.to_csv_row() + "\n");
  out << result.to_json() << "\n";
}

bool cmd_gradcheck(const Options& opts, std::ostream& out) {
  constexpr double kTolerance = 1e-4;
  constexpr std::size_t kSeeds = 10;
  const std::uint64_t first = opts.seed.value_or(0);
  const auto entries = run_gradient_suite(first, kSeeds, kTolerance);
  std::vector<std::string> failing;
  for (const auto& e : entries) {
    out << fmt::format("{:<42} {:>4} seeds  max rel err {:.3e}  {}\n", e.op, e.seeds,
                       e.worst_error, e.passed ? "PASS" : "FAIL");
    if (!e.passed) failing.push_back(e.op);
  }
  out << fmt::format("{} operations checked at tolerance {:g}; {} failed\n", entries.size(),
                     kTolerance, failing.size());
  for (const auto& f : failing) out << "failed: " << f << "\n";
  return failing.empty();
}

void cmd_inspect_pool(const Options& opts, std::ostream& out) {
  if (!opts.input) throw ConfigError("inspect-pool needs --input");
  const CacheRecord rec = cache_read(*opts.input);
  const Matrix& features = rec.matrix;
  const PoolingSpec spec = PoolingSpec::parse(opts.pooling.value_or("adpool"));
  if (opts.modality != "text" && opts.modality != "visual") {
    throw ConfigError(fmt::format("--modality must be text or visual, got '{}'", opts.modality));
  }

  PoolParams params = PoolParams::zeros(features.cols());
  if (opts.params) {
    std::map<std::string, Matrix> tensors;
    for (auto& r : cache_read_all(*opts.params))
      if (r.ids.size() == 1) tensors[r.ids.front()] = std::move(r.matrix);
    const std::string prefix = opts.modality + ".";
    auto pick = [&](const std::string& name) {
      auto it = tensors.find(prefix + name);
      if (it == tensors.end()) {
        throw DataError(fmt::format("{} has no tensor {}{}", opts.params->string(), prefix, name));
      }
      return it->second;
    };
    params = {pick("w_tok"), pick("w_bal")};
    params.validate(features.cols());
  }

  nlohmann::ordered_json j;
  j["spec"] = spec.to_string();
  j["rows"] = features.rows();
  j["cols"] = features.cols();
  auto rows_of = [](const Matrix& m) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < m.rows(); ++r)
      a.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return a;
  };
  if (spec.uses_token_weights()) {
    const AdPoolResult r = spec.method == PoolMethod::adpool
                               ? adpool(features, params)
                               : adpool_fixed_balance(features, params.w_tok, spec.fixed_omega);
    j["pooled"] = r.pooled;
    j["theta"] = r.theta;
    j["delta"] = rows_of(r.delta);
    j["omega"] = r.omega;
  } else {
    j["pooled"] = pool(features, spec, params);
  }
  out << j.dump(2) << "\n";
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive pooling and adaptive negative sampling for bi-encoder retrieval"};
  app.require_subcommand(1);
  Options opts;
  std::string loss_text;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "Experiment config (JSON)");
    cmd->add_option("--out", opts.out, "Output directory (overrides output_dir)");
  };

  auto* generate = app.add_subcommand("generate", "Generate the synthetic paired corpus");
  add_config(generate);
  generate->add_option("--seed", opts.seed, "Corpus seed");

  auto* train_cmd = app.add_subcommand("train", "Train both encoders");
  add_config(train_cmd);
  train_cmd->add_option("--seed", opts.seed, "Training seed");
  train_cmd->add_option("--loss", loss_text, "hard-triplet | infonce-adaptive | infonce-fixed")
      ->check(CLI::IsMember({"hard-triplet", "infonce-adaptive", "infonce-fixed"}));
  train_cmd->add_option("--k", opts.k, "Negatives per anchor in infonce-fixed mode");
  train_cmd->add_option("--epochs", opts.epochs, "Override train.epochs");

  auto* eval = app.add_subcommand("eval", "Evaluate trained parameters on the test split");
  add_config(eval);
  eval->add_option("--params", opts.params, "Parameter file (default <out>/params.bin)");
  eval->add_option("--ensemble", opts.ensemble, "Average similarities of several parameter files");
  eval->add_flag("--cache-embeddings", opts.cache_embeddings, "Reuse cached test embeddings");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gradcheck->add_option("--seed", opts.seed, "First seed of the 10 checked");

  auto* inspect = app.add_subcommand("inspect-pool", "Dump pooled vector and pooling weights");
  inspect->add_option("--input", opts.input, "Feature matrix in cache format")->required();
  inspect->add_option("--pooling", opts.pooling, "Pooling spec (default adpool)");
  inspect->add_option("--params", opts.params, "Parameter file to take w_tok / w_bal from");
  inspect->add_option("--modality", opts.modality, "text | visual (with --params)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kConfigError;
  }

  try {
    if (!loss_text.empty()) opts.loss = parse_loss_mode(loss_text);
    if (generate->parsed()) {
      cmd_generate(opts, out);
    } else if (train_cmd->parsed()) {
      cmd_train(opts, out);
    } else if (eval->parsed()) {
      cmd_eval(opts, out);
    } else if (gradcheck->parsed()) {
      return cmd_gradcheck(opts, out) ? kOk : kNumericalError;
    } else if (inspect->parsed()) {
      cmd_inspect_pool(opts, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::configuration: return kConfigError;
      case ErrorKind::data: return kDataError;
      case ErrorKind::numerical: return kNumericalError;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

}  // namespace adret::cli
