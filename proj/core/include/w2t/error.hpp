// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace w2t {

enum class Errc {
  kIo,
  kInvalidArgument,
  // interchange
  kInvalidCheckpoint,
  kBadMagic,
  kTruncatedPayload,
  kNonFiniteEntry,
  kMixedRank,
  kMissingEntryFile,
  kLabelDimMismatch,
  kManifestFormat,
  // canon
  kNonFiniteInput,
  kDegenerateDimensions,
  kTooLargeForOracle,
  kShapeMismatch,
  kResampleBudgetExhausted,
  kRankMismatch,
  kSingularG,
  // nn / encoder
  kNonFiniteActivation,
  kDetachedGraph,
  kConfigMismatch,
  kEmptySplit,
  kLabelSchemaMismatch,
  kLayoutMismatch,
  // synthgen
  kInvalidSpec,
  kUnlabeledCollection,
  // evalx
  kDegenerateLabels,
  kZeroVariance,
  kDimMismatch,
  kEmptyGallery,
};

std::string_view errc_name(Errc code) noexcept;

/// Exception type thrown by every w2t module. The code identifies the failure
/// class; what() carries a human-readable detail string.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace w2t
