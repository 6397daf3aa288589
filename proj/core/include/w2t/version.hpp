// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace w2t {

inline constexpr const char* kVersion = "0.3.0";
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr int kManifestFormatVersion = 1;
inline constexpr int kSnapshotFormatVersion = 1;

}  // namespace w2t
