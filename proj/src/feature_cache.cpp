#include "adret/feature_cache.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "adret/error.hpp"

namespace adret {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ArgumentError(fmt::format("feature cache: {} {} does not fit in 32 bits", what, v));
  }
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(fmt::format("truncated feature cache while reading {}", what), pos_);
    }
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t u32(const char* what) {
    auto b = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  }

  double f64() {
    auto b = take(8, "matrix values");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return std::bit_cast<double>(v);
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

CacheRecord decode_one(Reader& in) {
  const std::size_t start = in.offset();
  if (in.take(kCacheMagicSize, "magic") != std::string_view(kCacheMagic, kCacheMagicSize)) {
    throw FormatError("bad feature cache magic", start);
  }
  const std::uint64_t rows = in.u32("row count");
  const std::uint64_t cols = in.u32("column count");
  const std::size_t values_at = in.offset();
  // rows, cols < 2^32 so the product fits; the byte count might not.
  const std::uint64_t count = rows * cols;
  if (count > in.remaining() / 8) {
    throw FormatError(fmt::format("matrix {}x{} exceeds the remaining {} bytes", rows, cols,
                                  in.remaining()),
                      values_at);
  }
  std::vector<double> values(count);
  for (auto& v : values) v = in.f64();

  const std::uint32_t id_count = in.u32("id count");
  if (id_count > in.remaining() / 4) {
    throw FormatError(fmt::format("id count {} exceeds the remaining bytes", id_count),
                      in.offset() - 4);
  }
  std::vector<std::string> ids;
  ids.reserve(id_count);
  for (std::uint32_t i = 0; i < id_count; ++i) {
    const std::uint32_t len = in.u32("id length");
    ids.emplace_back(in.take(len, "id bytes"));
  }
  return {Matrix(rows, cols, std::move(values)), std::move(ids)};
}

}  // namespace

std::string encode_cache_record(const Matrix& matrix, std::span<const std::string> ids) {
  if (!matrix.all_finite()) throw ArgumentError("feature cache: refusing to write non-finite values");
  std::string out(kCacheMagic, kCacheMagicSize);
  put_u32(out, checked_u32(matrix.rows(), "row count"));
  put_u32(out, checked_u32(matrix.cols(), "column count"));
  for (double v : matrix.data()) put_f64(out, v);
  put_u32(out, checked_u32(ids.size(), "id count"));
  for (const auto& id : ids) {
    put_u32(out, checked_u32(id.size(), "id length"));
    out.append(id);
  }
  return out;
}

std::vector<CacheRecord> decode_cache_records(std::string_view bytes) {
  Reader in(bytes);
  std::vector<CacheRecord> out;
  do {
    out.push_back(decode_one(in));
  } while (!in.done());
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(fmt::format("cannot open {} for writing", tmp.string()));
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw IoError(fmt::format("write to {} failed", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError(fmt::format("cannot move {} into place", path.string()));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void cache_write(const std::filesystem::path& path, const Matrix& matrix,
                 std::span<const std::string> ids) {
  write_file_atomic(path, encode_cache_record(matrix, ids));
}

CacheRecord cache_read(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Reader in(bytes);
  CacheRecord rec = decode_one(in);
  if (!in.done()) throw FormatError("trailing bytes after feature cache record", in.offset());
  return rec;
}

void cache_write_all(const std::filesystem::path& path, std::span<const CacheRecord> records) {
  std::string bytes;
  for (const auto& r : records) bytes += encode_cache_record(r.matrix, r.ids);
  write_file_atomic(path, bytes);
}

std::vector<CacheRecord> cache_read_all(const std::filesystem::path& path) {
  return decode_cache_records(read_file(path));
}

namespace {

CacheRecord stack_instances(const std::vector<RawInstance>& instances, std::size_t width) {
  std::size_t total = 0;
  for (const auto& inst : instances) total += inst.features.rows();
  CacheRecord rec{Matrix(total, width), {}};
  rec.ids.reserve(total);
  std::size_t r = 0;
  for (const auto& inst : instances) {
    if (inst.features.cols() != width) {
      throw DimensionError(fmt::format("instance {} has width {}, expected {}", inst.id,
                                       inst.features.cols(), width));
    }
    for (std::size_t i = 0; i < inst.features.rows(); ++i, ++r) {
      std::copy(inst.features.row(i).begin(), inst.features.row(i).end(), rec.matrix.row(r).begin());
      rec.ids.push_back(inst.id);
    }
  }
  return rec;
}

std::vector<RawInstance> unstack_instances(const CacheRecord& rec, Modality modality,
                                           const std::filesystem::path& source) {
  if (rec.ids.size() != rec.matrix.rows()) {
    throw DataError(fmt::format("{}: {} ids for {} rows", source.string(), rec.ids.size(),
                                rec.matrix.rows()));
  }
  std::vector<RawInstance> out;
  std::size_t r = 0;
  while (r < rec.matrix.rows()) {
    std::size_t end = r;
    while (end < rec.matrix.rows() && rec.ids[end] == rec.ids[r]) ++end;
    Matrix features(end - r, rec.matrix.cols());
    for (std::size_t i = r; i < end; ++i)
      std::copy(rec.matrix.row(i).begin(), rec.matrix.row(i).end(), features.row(i - r).begin());
    out.push_back({modality, std::move(features), rec.ids[r], 0});
    r = end;
  }
  return out;
}

}  // namespace

void save_corpus(const std::filesystem::path& dir, const std::string& prefix, const Corpus& corpus) {
  if (corpus.images.empty() || corpus.texts.empty()) throw ArgumentError("save_corpus: empty corpus");
  const auto visual = stack_instances(corpus.images, corpus.images.front().features.cols());
  const auto text = stack_instances(corpus.texts, corpus.texts.front().features.cols());
  Matrix truth(corpus.texts.size(), 1);
  std::vector<std::string> caption_ids;
  for (std::size_t i = 0; i < corpus.texts.size(); ++i) {
    truth(i, 0) = static_cast<double>(corpus.texts[i].group_id);
    caption_ids.push_back(corpus.texts[i].id);
  }
  cache_write(dir / (prefix + "_visual.bin"), visual.matrix, visual.ids);
  cache_write(dir / (prefix + "_text.bin"), text.matrix, text.ids);
  cache_write(dir / (prefix + "_truth.bin"), truth, caption_ids);
}

Corpus load_corpus(const std::filesystem::path& dir, const std::string& prefix) {
  const auto visual_path = dir / (prefix + "_visual.bin");
  const auto text_path = dir / (prefix + "_text.bin");
  const auto truth_path = dir / (prefix + "_truth.bin");
  for (const auto& p : {visual_path, text_path, truth_path}) {
    if (!std::filesystem::exists(p)) {
      throw DataError(fmt::format("corpus file {} not found (run `generate` first)", p.string()));
    }
  }
  Corpus corpus;
  corpus.images = unstack_instances(cache_read(visual_path), Modality::visual, visual_path);
  for (std::size_t g = 0; g < corpus.images.size(); ++g) corpus.images[g].group_id = g;
  corpus.texts = unstack_instances(cache_read(text_path), Modality::text, text_path);

  const CacheRecord truth = cache_read(truth_path);
  if (truth.matrix.rows() != corpus.texts.size() || truth.matrix.cols() != 1) {
    throw DataError(fmt::format("{}: expected {}x1 truth table, got {}", truth_path.string(),
                                corpus.texts.size(), truth.matrix.shape_string()));
  }
  for (std::size_t i = 0; i < corpus.texts.size(); ++i) {
    const double g = truth.matrix(i, 0);
    if (truth.ids[i] != corpus.texts[i].id || g < 0.0 ||
        g >= static_cast<double>(corpus.images.size()) || g != std::floor(g)) {
      throw DataError(fmt::format("{}: bad truth entry for caption {}", truth_path.string(),
                                  corpus.texts[i].id));
    }
    corpus.texts[i].group_id = static_cast<std::size_t>(g);
  }
  return corpus;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  std::vector<CacheRecord> records;
  for (const auto& t : model.parameters()) records.push_back({*t.value, {t.name}});
  cache_write_all(path, records);
}

void load_model(const std::filesystem::path& path, Model& model) {
  const auto records = cache_read_all(path);
  std::map<std::string, const Matrix*> by_name;
  for (const auto& r : records) {
    if (r.ids.size() != 1) throw DataError(fmt::format("{}: tensor record without a name", path.string()));
    by_name[r.ids.front()] = &r.matrix;
  }
  for (auto& t : model.parameters()) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) {
      throw DataError(fmt::format("{}: missing tensor {}", path.string(), t.name));
    }
    if (it->second->rows() != t.value->rows() || it->second->cols() != t.value->cols()) {
      throw ConfigError(fmt::format("{}: tensor {} is {}, model expects {}", path.string(), t.name,
                                    it->second->shape_string(), t.value->shape_string()));
    }
    *t.value = *it->second;
  }
}

}  // namespace adret
