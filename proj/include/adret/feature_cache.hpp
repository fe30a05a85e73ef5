#pragma once

// Binary matrix + id table format:
//
//   "ADRET1\n"                 7 bytes
//   rows                       u32 little-endian
//   cols                       u32 little-endian
//   rows*cols values           f64 little-endian, row-major
//   id count                   u32 little-endian
//   per id: byte length (u32 LE) followed by UTF-8 bytes
//
// A file may hold several records back to back (parameter files do).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "adret/corpus.hpp"
#include "adret/encoder.hpp"
#include "adret/matrix.hpp"

namespace adret {

inline constexpr char kCacheMagic[] = "ADRET1\n";
inline constexpr std::size_t kCacheMagicSize = 7;

struct CacheRecord {
  Matrix matrix;
  std::vector<std::string> ids;

  friend bool operator==(const CacheRecord&, const CacheRecord&) = default;
};

std::string encode_cache_record(const Matrix& matrix, std::span<const std::string> ids);
// Parses every record in `bytes`; errors carry the byte offset of the fault.
std::vector<CacheRecord> decode_cache_records(std::string_view bytes);

void cache_write(const std::filesystem::path& path, const Matrix& matrix,
                 std::span<const std::string> ids);
CacheRecord cache_read(const std::filesystem::path& path);

void cache_write_all(const std::filesystem::path& path, std::span<const CacheRecord> records);
std::vector<CacheRecord> cache_read_all(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// Corpus split on disk: <prefix>_visual.bin and <prefix>_text.bin hold stacked
// feature rows with the owning instance id per row; <prefix>_truth.bin is a
// captions x 1 matrix of image indices with caption ids.
void save_corpus(const std::filesystem::path& dir, const std::string& prefix, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir, const std::string& prefix);

// One record per tensor, the single id being the parameter name.
void save_model(const std::filesystem::path& path, const Model& model);
// Copies tensors into `model`, whose shapes must already match.
void load_model(const std::filesystem::path& path, Model& model);

}  // namespace adret
