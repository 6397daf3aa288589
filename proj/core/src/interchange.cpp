// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/interchange.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "w2t/error.hpp"

namespace w2t::interchange {
namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'L', 'W', 'C', '1'};
constexpr char kCanonicalMagic[4] = {'L', 'W', 'C', 'C'};
constexpr std::size_t kPositionHeaderBytes = 17;

class ByteWriter {
 public:
  void bytes(const char* data, std::size_t n) { buf_.insert(buf_.end(), data, data + n); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  template <typename Derived>
  void matrix(const Eigen::MatrixBase<Derived>& m) {
    // row-major traversal regardless of storage order
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) f32(static_cast<float>(m(i, j)));
  }

  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  std::size_t remaining() const { return buf_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw Error(Errc::kTruncatedPayload, std::string("file ends inside ") + what);
  }
  std::uint8_t u8() {
    need(1, "header");
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4, "header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void magic(char out[4]) {
    need(4, "magic");
    std::memcpy(out, buf_.data() + pos_, 4);
    pos_ += 4;
  }

  MatrixF matrix(std::uint32_t rows, std::uint32_t cols, const char* what) {
    const std::uint64_t count = std::uint64_t{rows} * cols;
    if (count * 4 > remaining())
      throw Error(Errc::kTruncatedPayload, std::string("file ends inside ") + what);
    MatrixF m(rows, cols);
    float* dst = m.data();
    for (std::uint64_t i = 0; i < count; ++i) {
      float v = f32();
      if (!std::isfinite(v))
        throw Error(Errc::kNonFiniteEntry, std::string("non-finite entry in ") + what);
      dst[i] = v;
    }
    return m;
  }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::kIo, "write failed for " + path.string());
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

std::string label_kind(const Label& label) {
  switch (label.index()) {
    case 0: return "none";
    case 1: return "attributes";
    case 2: return "score";
    default: return "task";
  }
}

json label_to_json(const Label& label) {
  if (const auto* bits = std::get_if<std::vector<std::uint8_t>>(&label)) {
    json arr = json::array();
    for (auto b : *bits) arr.push_back(static_cast<int>(b));
    return arr;
  }
  if (const auto* score = std::get_if<double>(&label)) return *score;
  if (const auto* task = std::get_if<std::string>(&label)) return *task;
  return nullptr;
}

Label label_from_json(const json& j, LabelSchema schema) {
  if (j.is_null()) return std::monostate{};
  switch (schema) {
    case LabelSchema::kMultilabel: {
      if (!j.is_array()) throw Error(Errc::kManifestFormat, "multilabel label must be an array");
      std::vector<std::uint8_t> bits;
      for (const auto& b : j) {
        int v = b.get<int>();
        if (v != 0 && v != 1) throw Error(Errc::kManifestFormat, "attribute bits must be 0/1");
        bits.push_back(static_cast<std::uint8_t>(v));
      }
      return bits;
    }
    case LabelSchema::kRegression:
      if (!j.is_number()) throw Error(Errc::kManifestFormat, "regression label must be a number");
      return j.get<double>();
    case LabelSchema::kTaskRetrieval:
      if (!j.is_string()) throw Error(Errc::kManifestFormat, "task label must be a string");
      return j.get<std::string>();
    case LabelSchema::kUnlabeled:
      return std::monostate{};
  }
  return std::monostate{};
}

}  // namespace

ModuleKind PositionKey::kind() const noexcept {
  return module_code <= 3 ? static_cast<ModuleKind>(module_code) : ModuleKind::kOther;
}

std::string module_name(std::uint8_t code) {
  switch (code) {
    case 0: return "q";
    case 1: return "k";
    case 2: return "v";
    case 3: return "o";
    case 255: return "other";
    default: return std::to_string(code);
  }
}

std::uint8_t parse_module(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "q") return 0;
  if (t == "k") return 1;
  if (t == "v") return 2;
  if (t == "o") return 3;
  if (t == "other") return 255;
  try {
    std::size_t used = 0;
    int v = std::stoi(t, &used);
    if (used == t.size() && v >= 0 && v <= 255) return static_cast<std::uint8_t>(v);
  } catch (const std::exception&) {
  }
  throw Error(Errc::kInvalidArgument, "unknown module kind '" + text + "'");
}

void validate(const FactorPair& fp) {
  const auto r = fp.b.cols();
  if (r < 1) throw Error(Errc::kInvalidCheckpoint, "rank must be >= 1");
  if (fp.a.rows() != r)
    throw Error(Errc::kInvalidCheckpoint, "B columns and A rows disagree on rank");
  if (fp.b.rows() < r || fp.a.cols() < r)
    throw Error(Errc::kInvalidCheckpoint, "d_out and d_in must be >= rank");
  if (!all_finite(fp.b) || !all_finite(fp.a))
    throw Error(Errc::kNonFiniteEntry, "factor pair has NaN/Inf entries");
}

void validate(const LoraCheckpoint& ckpt) {
  if (ckpt.positions.empty()) throw Error(Errc::kInvalidCheckpoint, "empty position list");
  std::set<PositionKey> seen;
  const auto r = ckpt.positions.front().factors.rank();
  for (const auto& p : ckpt.positions) {
    validate(p.factors);
    if (p.factors.rank() != r) throw Error(Errc::kMixedRank, "positions disagree on rank");
    if (!seen.insert(p.key).second)
      throw Error(Errc::kInvalidCheckpoint,
                  "duplicate position (" + std::to_string(p.key.layer_index) + ", " +
                      module_name(p.key.module_code) + ")");
  }
}

void sort_positions(LoraCheckpoint& ckpt) {
  std::stable_sort(ckpt.positions.begin(), ckpt.positions.end(),
                   [](const Position& x, const Position& y) { return x.key < y.key; });
}

std::vector<std::uint8_t> encode_checkpoint(const LoraCheckpoint& ckpt) {
  validate(ckpt);
  std::vector<const Position*> order;
  order.reserve(ckpt.positions.size());
  for (const auto& p : ckpt.positions) order.push_back(&p);
  std::sort(order.begin(), order.end(),
            [](const Position* x, const Position* y) { return x->key < y->key; });

  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(static_cast<std::uint32_t>(order.size()));
  for (const Position* p : order) {
    const auto& fp = p->factors;
    w.u32(p->key.layer_index);
    w.u8(p->key.module_code);
    w.u32(static_cast<std::uint32_t>(fp.d_out()));
    w.u32(static_cast<std::uint32_t>(fp.d_in()));
    w.u32(static_cast<std::uint32_t>(fp.rank()));
    w.matrix(fp.b);
    w.matrix(fp.a);
  }
  return w.take();
}

void write_checkpoint(const LoraCheckpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

LoraCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, std::string id) {
  ByteReader rd(bytes);
  char magic[4];
  rd.magic(magic);
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(Errc::kBadMagic, "expected LWC1");
  const std::uint32_t count = rd.u32();
  // Each position needs at least its header plus one B and one A entry.
  if (std::uint64_t{count} * (kPositionHeaderBytes + 8) > rd.remaining())
    throw Error(Errc::kTruncatedPayload, "position count exceeds file size");

  LoraCheckpoint ckpt;
  ckpt.id = std::move(id);
  ckpt.positions.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Position p;
    p.key.layer_index = rd.u32();
    p.key.module_code = rd.u8();
    const std::uint32_t d_out = rd.u32();
    const std::uint32_t d_in = rd.u32();
    const std::uint32_t r = rd.u32();
    if (r == 0 || d_out < r || d_in < r)
      throw Error(Errc::kInvalidCheckpoint, "bad dimensions in position header");
    p.factors.b = rd.matrix(d_out, r, "B");
    p.factors.a = rd.matrix(r, d_in, "A");
    ckpt.positions.push_back(std::move(p));
  }
  if (rd.remaining() != 0) throw Error(Errc::kInvalidCheckpoint, "trailing bytes after payload");
  validate(ckpt);
  for (std::size_t i = 1; i < ckpt.positions.size(); ++i)
    if (!(ckpt.positions[i - 1].key < ckpt.positions[i].key))
      throw Error(Errc::kInvalidCheckpoint, "positions not in canonical order");
  return ckpt;
}

LoraCheckpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.stem().string());
}

// -- collections -------------------------------------------------------------

std::string to_string(LabelSchema schema) {
  switch (schema) {
    case LabelSchema::kMultilabel: return "multilabel";
    case LabelSchema::kRegression: return "regression";
    case LabelSchema::kTaskRetrieval: return "task_retrieval";
    case LabelSchema::kUnlabeled: return "unlabeled";
  }
  return "unlabeled";
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kGallery: return "gallery";
    case Split::kQuery: return "query";
  }
  return "train";
}

LabelSchema parse_label_schema(const std::string& text) {
  if (text == "multilabel") return LabelSchema::kMultilabel;
  if (text == "regression") return LabelSchema::kRegression;
  if (text == "task_retrieval") return LabelSchema::kTaskRetrieval;
  if (text == "unlabeled") return LabelSchema::kUnlabeled;
  throw Error(Errc::kManifestFormat, "unknown label_schema '" + text + "'");
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  if (text == "gallery") return Split::kGallery;
  if (text == "query") return Split::kQuery;
  throw Error(Errc::kManifestFormat, "unknown split '" + text + "'");
}

CollectionManifest parse_manifest(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(Errc::kManifestFormat, e.what());
  }
  CollectionManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.label_schema = parse_label_schema(j.at("label_schema").get<std::string>());
    m.label_dim = j.at("label_dim").get<int>();
    m.rank = j.at("rank").get<int>();
    m.layer_count = j.at("layer_count").get<int>();
    if (j.contains("generator_seed") && !j["generator_seed"].is_null())
      m.generator_seed = j["generator_seed"].get<std::uint64_t>();
    std::set<std::string> ids;
    for (const auto& e : j.at("checkpoints")) {
      CheckpointEntry entry;
      entry.id = e.at("id").get<std::string>();
      entry.path = e.at("path").get<std::string>();
      entry.split = parse_split(e.at("split").get<std::string>());
      if (e.contains("label")) entry.label = label_from_json(e["label"], m.label_schema);
      if (!ids.insert(entry.id).second)
        throw Error(Errc::kManifestFormat, "duplicate checkpoint id '" + entry.id + "'");
      m.checkpoints.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kManifestFormat, e.what());
  }
  if (m.format_version != 1)
    throw Error(Errc::kManifestFormat,
                "unsupported format_version " + std::to_string(m.format_version));
  if (m.rank < 1 || m.layer_count < 1 || m.label_dim < 0)
    throw Error(Errc::kManifestFormat, "rank and layer_count must be positive");
  return m;
}

std::string dump_manifest(const CollectionManifest& m) {
  json j;
  j["format_version"] = m.format_version;
  j["label_schema"] = to_string(m.label_schema);
  j["label_dim"] = m.label_dim;
  j["rank"] = m.rank;
  j["layer_count"] = m.layer_count;
  j["generator_seed"] = m.generator_seed ? json(*m.generator_seed) : json(nullptr);
  json entries = json::array();
  for (const auto& e : m.checkpoints) {
    json je;
    je["id"] = e.id;
    je["path"] = e.path;
    je["split"] = to_string(e.split);
    je["label"] = label_to_json(e.label);
    entries.push_back(std::move(je));
  }
  j["checkpoints"] = std::move(entries);
  return j.dump(2) + "\n";
}

void write_manifest(const CollectionManifest& manifest, const std::filesystem::path& path) {
  const std::string text = dump_manifest(manifest);
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

Collection::Collection(CollectionManifest manifest, std::filesystem::path root)
    : manifest_(std::move(manifest)), root_(std::move(root)) {
  order_.resize(manifest_.checkpoints.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::sort(order_.begin(), order_.end(), [this](std::size_t x, std::size_t y) {
    return manifest_.checkpoints[x].id < manifest_.checkpoints[y].id;
  });
}

std::vector<std::string> Collection::ids() const {
  std::vector<std::string> out;
  out.reserve(manifest_.checkpoints.size());
  for (const auto& e : manifest_.checkpoints) out.push_back(e.id);
  return out;
}

std::vector<std::string> Collection::ids(Split split) const {
  std::vector<std::string> out;
  for (const auto& e : manifest_.checkpoints)
    if (e.split == split) out.push_back(e.id);
  return out;
}

bool Collection::contains(const std::string& id) const {
  auto it = std::lower_bound(order_.begin(), order_.end(), id, [this](std::size_t i, const std::string& v) {
    return manifest_.checkpoints[i].id < v;
  });
  return it != order_.end() && manifest_.checkpoints[*it].id == id;
}

const CheckpointEntry& Collection::entry(const std::string& id) const {
  auto it = std::lower_bound(order_.begin(), order_.end(), id, [this](std::size_t i, const std::string& v) {
    return manifest_.checkpoints[i].id < v;
  });
  if (it == order_.end() || manifest_.checkpoints[*it].id != id)
    throw Error(Errc::kInvalidArgument, "unknown checkpoint id '" + id + "'");
  return manifest_.checkpoints[*it];
}

LoraCheckpoint Collection::load(const std::string& id) const {
  const auto& e = entry(id);
  const auto path = root_ / e.path;
  if (!std::filesystem::exists(path))
    throw Error(Errc::kMissingEntryFile, path.string());
  LoraCheckpoint ckpt = read_checkpoint(path);
  ckpt.id = e.id;
  ckpt.label = e.label;
  if (ckpt.rank() != manifest_.rank)
    throw Error(Errc::kMixedRank, "checkpoint '" + id + "' has rank " +
                                      std::to_string(ckpt.rank()) + ", manifest declares " +
                                      std::to_string(manifest_.rank));
  for (const auto& p : ckpt.positions)
    if (p.key.layer_index >= static_cast<std::uint32_t>(manifest_.layer_count))
      throw Error(Errc::kInvalidCheckpoint, "layer_index beyond manifest layer_count in '" + id + "'");
  return ckpt;
}

Collection load_collection(const std::filesystem::path& manifest_path) {
  std::filesystem::path path = manifest_path;
  if (std::filesystem::is_directory(path)) path /= "manifest.json";
  if (!std::filesystem::exists(path)) throw Error(Errc::kIo, "manifest not found: " + path.string());
  const auto bytes = read_file(path);
  CollectionManifest m = parse_manifest(std::string(bytes.begin(), bytes.end()));
  const auto root = path.parent_path();
  for (const auto& e : m.checkpoints) {
    if (!std::filesystem::is_regular_file(root / e.path))
      throw Error(Errc::kMissingEntryFile, "entry '" + e.id + "' -> " + (root / e.path).string());
    if (m.label_schema == LabelSchema::kMultilabel) {
      const auto* bits = std::get_if<std::vector<std::uint8_t>>(&e.label);
      if (bits && static_cast<int>(bits->size()) != m.label_dim)
        throw Error(Errc::kLabelDimMismatch,
                    "entry '" + e.id + "' has " + std::to_string(bits->size()) +
                        " attribute bits, manifest label_dim is " + std::to_string(m.label_dim));
    }
    if (m.label_schema != LabelSchema::kUnlabeled && !std::holds_alternative<std::monostate>(e.label)) {
      const bool ok = (m.label_schema == LabelSchema::kMultilabel && e.label.index() == 1) ||
                      (m.label_schema == LabelSchema::kRegression && e.label.index() == 2) ||
                      (m.label_schema == LabelSchema::kTaskRetrieval && e.label.index() == 3);
      if (!ok)
        throw Error(Errc::kManifestFormat,
                    "entry '" + e.id + "' carries a " + label_kind(e.label) + " label");
    }
  }
  return Collection(std::move(m), root);
}

std::vector<Split> assign_supervised_splits(std::size_t n, std::uint64_t seed,
                                            double train_fraction, double val_fraction) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ 0x53504c4954ull);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  std::vector<Split> out(n, Split::kTest);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) out[perm[i]] = Split::kTrain;
    else if (i < n_train + n_val) out[perm[i]] = Split::kVal;
  }
  return out;
}

// -- canonical files ---------------------------------------------------------

void write_canonical_file(const std::vector<CanonicalPosition>& positions,
                          const std::filesystem::path& path) {
  ByteWriter w;
  w.bytes(kCanonicalMagic, 4);
  w.u32(static_cast<std::uint32_t>(positions.size()));
  for (const auto& p : positions) {
    const auto r = p.sigma.size();
    if (p.u.cols() != r || p.v.cols() != r)
      throw Error(Errc::kShapeMismatch, "canonical position has inconsistent rank");
    w.u32(p.key.layer_index);
    w.u8(p.key.module_code);
    w.u32(static_cast<std::uint32_t>(p.u.rows()));
    w.u32(static_cast<std::uint32_t>(p.v.rows()));
    w.u32(static_cast<std::uint32_t>(r));
    w.matrix(p.u);
    w.matrix(p.sigma.transpose());
    w.matrix(p.v);
  }
  write_file(path, w.take());
}

std::vector<CanonicalPosition> read_canonical_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader rd(bytes);
  char magic[4];
  rd.magic(magic);
  if (std::memcmp(magic, kCanonicalMagic, 4) != 0) throw Error(Errc::kBadMagic, "expected LWCC");
  const std::uint32_t count = rd.u32();
  if (std::uint64_t{count} * kPositionHeaderBytes > rd.remaining())
    throw Error(Errc::kTruncatedPayload, "position count exceeds file size");
  std::vector<CanonicalPosition> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    CanonicalPosition p;
    p.key.layer_index = rd.u32();
    p.key.module_code = rd.u8();
    const std::uint32_t d_out = rd.u32();
    const std::uint32_t d_in = rd.u32();
    const std::uint32_t r = rd.u32();
    if (r == 0 || d_out < r || d_in < r)
      throw Error(Errc::kInvalidCheckpoint, "bad dimensions in position header");
    p.u = rd.matrix(d_out, r, "U");
    p.sigma = rd.matrix(1, r, "sigma").transpose();
    p.v = rd.matrix(d_in, r, "V");
    out.push_back(std::move(p));
  }
  if (rd.remaining() != 0) throw Error(Errc::kInvalidCheckpoint, "trailing bytes after payload");
  return out;
}

}  // namespace w2t::interchange
