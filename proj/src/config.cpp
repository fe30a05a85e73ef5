#include "adret/config.hpp"

#include <set>

#include <fmt/format.h>

#include "adret/error.hpp"
#include "adret/feature_cache.hpp"
#include "json.hpp"

namespace adret {
namespace {

using json = nlohmann::json;

void reject_unknown(const json& obj, const std::string& where, std::set<std::string> known) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.contains(key)) {
      throw ConfigError(fmt::format("unknown config field '{}{}'", where, key));
    }
  }
}

const json* section(const json& root, const char* name) {
  if (!root.contains(name)) return nullptr;
  const json& s = root.at(name);
  if (!s.is_object()) throw ConfigError(fmt::format("config field '{}' must be an object", name));
  return &s;
}

template <typename T>
void read(const json* obj, const std::string& where, const char* key, T& out) {
  if (!obj || !obj->contains(key)) return;
  const json& v = obj->at(key);
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    out = v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("config field '{}{}' has the wrong type", where, key));
  }
}

void read_range(const json* obj, const std::string& where, const char* key, LengthRange& out) {
  if (!obj || !obj->contains(key)) return;
  const json& v = obj->at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned()) {
    throw ConfigError(fmt::format("config field '{}{}' must be [min, max]", where, key));
  }
  out = {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
}

PoolingSpec read_pooling(const json* obj, const char* key, PoolingSpec fallback) {
  std::string text;
  read(obj, "model.", key, text);
  if (text.empty()) return fallback;
  try {
    return PoolingSpec::parse(text);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("config field 'model.{}': {}", key, e.what()));
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::desk_defaults() {
  ExperimentConfig cfg;
  cfg.corpus.seed = 7;
  cfg.init_seed = 11;
  cfg.train.seed = 3;
  return cfg;
}

ExperimentConfig ExperimentConfig::parse(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(root, "", {"output_dir", "corpus_dir", "corpus", "model", "train", "eval"});

  ExperimentConfig cfg = desk_defaults();
  if (!root.contains("output_dir")) throw ConfigError("missing required config field 'output_dir'");
  std::string dir;
  read(&root, "", "output_dir", dir);
  cfg.output_dir = dir;
  std::string corpus_dir;
  read(&root, "", "corpus_dir", corpus_dir);
  cfg.corpus_dir = corpus_dir;

  if (const json* c = section(root, "corpus")) {
    reject_unknown(*c, "corpus.",
                   {"train_groups", "val_groups", "test_groups", "captions_per_image", "latent_dim",
                    "visual_dim", "text_dim", "visual_len", "text_len", "noise_scale", "seed"});
    read(c, "corpus.", "train_groups", cfg.train_groups);
    read(c, "corpus.", "val_groups", cfg.val_groups);
    read(c, "corpus.", "test_groups", cfg.test_groups);
    read(c, "corpus.", "captions_per_image", cfg.corpus.captions_per_image);
    read(c, "corpus.", "latent_dim", cfg.corpus.latent_dim);
    read(c, "corpus.", "visual_dim", cfg.corpus.visual_dim);
    read(c, "corpus.", "text_dim", cfg.corpus.text_dim);
    read_range(c, "corpus.", "visual_len", cfg.corpus.visual_len);
    read_range(c, "corpus.", "text_len", cfg.corpus.text_len);
    read(c, "corpus.", "noise_scale", cfg.corpus.noise_scale);
    read(c, "corpus.", "seed", cfg.corpus.seed);
  }
  if (const json* m = section(root, "model")) {
    reject_unknown(*m, "model.", {"embed_dim", "visual_pooling", "text_pooling", "init_seed"});
    read(m, "model.", "embed_dim", cfg.embed_dim);
    read(m, "model.", "init_seed", cfg.init_seed);
    cfg.visual_pooling = read_pooling(m, "visual_pooling", cfg.visual_pooling);
    cfg.text_pooling = read_pooling(m, "text_pooling", cfg.text_pooling);
  }
  if (const json* t = section(root, "train")) {
    reject_unknown(*t, "train.",
                   {"batch_size", "epochs", "lr", "lr_decay_every", "lr_decay_factor", "loss", "k",
                    "margin", "temperature", "seed"});
    read(t, "train.", "batch_size", cfg.train.batch_size);
    read(t, "train.", "epochs", cfg.train.epochs);
    read(t, "train.", "lr", cfg.train.lr);
    read(t, "train.", "lr_decay_every", cfg.train.lr_decay_every);
    read(t, "train.", "lr_decay_factor", cfg.train.lr_decay_factor);
    std::string loss;
    read(t, "train.", "loss", loss);
    if (!loss.empty()) cfg.train.loss.mode = parse_loss_mode(loss);
    read(t, "train.", "k", cfg.train.loss.fixed_k);
    read(t, "train.", "margin", cfg.train.loss.margin);
    read(t, "train.", "temperature", cfg.train.loss.temperature);
    read(t, "train.", "seed", cfg.train.seed);
  }
  if (const json* e = section(root, "eval")) {
    reject_unknown(*e, "eval.", {"folds"});
    read(e, "eval.", "folds", cfg.eval_folds);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError(fmt::format("config file {} not found", path.string()));
  }
  return parse(read_file(path));
}

std::string ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["output_dir"] = output_dir.string();
  if (!corpus_dir.empty()) j["corpus_dir"] = corpus_dir.string();
  j["corpus"] = {{"train_groups", train_groups},
                 {"val_groups", val_groups},
                 {"test_groups", test_groups},
                 {"captions_per_image", corpus.captions_per_image},
                 {"latent_dim", corpus.latent_dim},
                 {"visual_dim", corpus.visual_dim},
                 {"text_dim", corpus.text_dim},
                 {"visual_len", {corpus.visual_len.min, corpus.visual_len.max}},
                 {"text_len", {corpus.text_len.min, corpus.text_len.max}},
                 {"noise_scale", corpus.noise_scale},
                 {"seed", corpus.seed}};
  j["model"] = {{"embed_dim", embed_dim},
                {"visual_pooling", visual_pooling.to_string()},
                {"text_pooling", text_pooling.to_string()},
                {"init_seed", init_seed}};
  j["train"] = {{"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"lr", train.lr},
                {"lr_decay_every", train.lr_decay_every},
                {"lr_decay_factor", train.lr_decay_factor},
                {"loss", std::string(adret::to_string(train.loss.mode))},
                {"k", train.loss.fixed_k},
                {"margin", train.loss.margin},
                {"temperature", train.loss.temperature},
                {"seed", train.seed}};
  j["eval"] = {{"folds", eval_folds}};
  return j.dump(2);
}

std::filesystem::path ExperimentConfig::resolved_corpus_dir() const {
  return corpus_dir.empty() ? output_dir / "corpus" : corpus_dir;
}

void ExperimentConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("config field 'output_dir' must not be empty");
  SyntheticCorpusConfig c = corpus;
  c.num_groups = train_groups + val_groups + test_groups;
  c.validate();
  if (train_groups == 0 || val_groups == 0 || test_groups == 0) {
    throw ConfigError("config fields 'corpus.*_groups' must be >= 1");
  }
  if (embed_dim == 0) throw ConfigError("config field 'model.embed_dim' must be >= 1");
  visual_pooling.validate();
  text_pooling.validate();
  train.validate();
  if (eval_folds == 0 || eval_folds > test_groups) {
    throw ConfigError("config field 'eval.folds' must be in [1, test_groups]");
  }
}

}  // namespace adret
