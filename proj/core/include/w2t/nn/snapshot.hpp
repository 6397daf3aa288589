// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

// Parameter snapshots: `params.json` (group/tensor names, shapes, seed,
// epoch) plus one raw float32 little-endian blob per group, tensors
// concatenated row-major in declaration order.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "w2t/nn/params.hpp"

namespace w2t::nn {

struct SnapshotMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
};

void save_snapshot(const ParamStore& params, const SnapshotMeta& meta,
                   const std::filesystem::path& dir);

/// Loads values into a store with the same layout; throws kShapeMismatch on
/// any name or shape difference.
SnapshotMeta load_snapshot(ParamStore& params, const std::filesystem::path& dir);

}  // namespace w2t::nn
