// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

// On-disk LoRA collections.
//
// A collection is a directory holding `manifest.json` plus one LWC1 binary
// file per checkpoint. LWC1 layout (all integers little-endian):
//
//   magic "LWC1" | position_count u32
//   per position: layer_index u32 | module_kind u8 | d_out u32 | d_in u32 | r u32
//                 B: d_out*r float32 row-major | A: r*d_in float32 row-major
//
// The canonical variant LWCC shares the header and stores U (d_out*r),
// sigma (r) and V (d_in*r) per position instead of (B, A).

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "w2t/types.hpp"

namespace w2t::interchange {

/// Stable byte codes for the projection a position adapts. Any other byte is
/// an "other" module and is preserved verbatim.
enum class ModuleKind : std::uint8_t { kQ = 0, kK = 1, kV = 2, kO = 3, kOther = 255 };

struct PositionKey {
  std::uint32_t layer_index = 0;
  std::uint8_t module_code = 0;

  ModuleKind kind() const noexcept;
  auto operator<=>(const PositionKey&) const = default;
};

std::string module_name(std::uint8_t code);
/// Parses "q", "k", "v", "o", "other" or a decimal byte code.
std::uint8_t parse_module(const std::string& text);

template <typename T>
struct BasicFactorPair {
  Matrix<T> b;  // d_out x r
  Matrix<T> a;  // r x d_in

  Eigen::Index d_out() const { return b.rows(); }
  Eigen::Index d_in() const { return a.cols(); }
  Eigen::Index rank() const { return b.cols(); }
};
using FactorPair = BasicFactorPair<float>;

struct Position {
  PositionKey key;
  FactorPair factors;
};

/// attributes | score | task id | none
using Label = std::variant<std::monostate, std::vector<std::uint8_t>, double, std::string>;

struct LoraCheckpoint {
  std::string id;
  std::vector<Position> positions;
  Label label;

  Eigen::Index rank() const { return positions.empty() ? 0 : positions.front().factors.rank(); }
};

/// Throws kInvalidCheckpoint / kNonFiniteEntry / kMixedRank when a factor pair
/// or checkpoint breaks its invariants.
void validate(const FactorPair& fp);
void validate(const LoraCheckpoint& ckpt);

/// Positions sorted by key; serialization order is a pure function of the keys.
void sort_positions(LoraCheckpoint& ckpt);

void write_checkpoint(const LoraCheckpoint& ckpt, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const LoraCheckpoint& ckpt);

/// The id of the returned checkpoint is the file stem; the label is empty.
LoraCheckpoint read_checkpoint(const std::filesystem::path& path);
LoraCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, std::string id = {});

// -- collections -------------------------------------------------------------

enum class LabelSchema { kMultilabel, kRegression, kTaskRetrieval, kUnlabeled };
enum class Split { kTrain, kVal, kTest, kGallery, kQuery };

std::string to_string(LabelSchema schema);
std::string to_string(Split split);
LabelSchema parse_label_schema(const std::string& text);
Split parse_split(const std::string& text);

struct CheckpointEntry {
  std::string id;
  std::string path;  // relative to the manifest directory
  Split split = Split::kTrain;
  Label label;
};

struct CollectionManifest {
  int format_version = 1;
  LabelSchema label_schema = LabelSchema::kUnlabeled;
  int label_dim = 0;
  int rank = 0;
  int layer_count = 0;
  std::vector<CheckpointEntry> checkpoints;
  std::optional<std::uint64_t> generator_seed;
};

CollectionManifest parse_manifest(const std::string& json_text);
std::string dump_manifest(const CollectionManifest& manifest);
void write_manifest(const CollectionManifest& manifest, const std::filesystem::path& path);

/// A loaded manifest plus lazy, on-demand checkpoint access. Read paths are
/// reentrant; concurrent load() calls on distinct ids are safe.
class Collection {
 public:
  Collection(CollectionManifest manifest, std::filesystem::path root);

  const CollectionManifest& manifest() const noexcept { return manifest_; }
  const std::filesystem::path& root() const noexcept { return root_; }

  std::vector<std::string> ids() const;
  std::vector<std::string> ids(Split split) const;
  bool contains(const std::string& id) const;
  const CheckpointEntry& entry(const std::string& id) const;

  /// Reads the checkpoint file, attaches the manifest label and checks rank
  /// and layer bounds against the manifest.
  LoraCheckpoint load(const std::string& id) const;

 private:
  CollectionManifest manifest_;
  std::filesystem::path root_;
  std::vector<std::size_t> order_;  // entry indices sorted by id
};

/// Accepts a manifest path or a directory containing manifest.json. Every
/// entry file must exist (kMissingEntryFile) and every multilabel label must
/// have label_dim bits (kLabelDimMismatch).
Collection load_collection(const std::filesystem::path& manifest_path);

/// Assigns train/val/test by seeded shuffle of the ids in 8:1:1 proportion.
std::vector<Split> assign_supervised_splits(std::size_t n, std::uint64_t seed,
                                            double train_fraction = 0.8,
                                            double val_fraction = 0.1);

// -- canonical files (LWCC) --------------------------------------------------

struct CanonicalPosition {
  PositionKey key;
  MatrixF u;      // d_out x r
  VectorF sigma;  // r
  MatrixF v;      // d_in x r
};

void write_canonical_file(const std::vector<CanonicalPosition>& positions,
                          const std::filesystem::path& path);
std::vector<CanonicalPosition> read_canonical_file(const std::filesystem::path& path);

}  // namespace w2t::interchange
