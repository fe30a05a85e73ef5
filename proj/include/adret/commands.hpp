#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adret/objectives.hpp"

namespace adret::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kNumericalError = 3 };

struct Options {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<LossMode> loss;
  std::optional<std::size_t> k;
  std::optional<std::size_t> epochs;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> params;
  std::vector<std::filesystem::path> ensemble;
  bool cache_embeddings = false;
  // inspect-pool
  std::optional<std::filesystem::path> input;
  std::optional<std::string> pooling;
  std::string modality = "text";
};

// Each command reports to `out` and throws adret::Error on failure;
// run_cli turns errors into exit codes.
void cmd_generate(const Options& opts, std::ostream& out);
void cmd_train(const Options& opts, std::ostream& out);
void cmd_eval(const Options& opts, std::ostream& out);
// Returns false if any check failed.
bool cmd_gradcheck(const Options& opts, std::ostream& out);
void cmd_inspect_pool(const Options& opts, std::ostream& out);

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace adret::cli
