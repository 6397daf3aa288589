// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/error.hpp"

namespace w2t {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kIo: return "IoError";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kInvalidCheckpoint: return "InvalidCheckpoint";
    case Errc::kBadMagic: return "BadMagic";
    case Errc::kTruncatedPayload: return "TruncatedPayload";
    case Errc::kNonFiniteEntry: return "NonFiniteEntry";
    case Errc::kMixedRank: return "MixedRank";
    case Errc::kMissingEntryFile: return "MissingEntryFile";
    case Errc::kLabelDimMismatch: return "LabelDimMismatch";
    case Errc::kManifestFormat: return "ManifestFormat";
    case Errc::kNonFiniteInput: return "NonFiniteInput";
    case Errc::kDegenerateDimensions: return "DegenerateDimensions";
    case Errc::kTooLargeForOracle: return "TooLargeForOracle";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kResampleBudgetExhausted: return "ResampleBudgetExhausted";
    case Errc::kRankMismatch: return "RankMismatch";
    case Errc::kSingularG: return "SingularG";
    case Errc::kNonFiniteActivation: return "NonFiniteActivation";
    case Errc::kDetachedGraph: return "DetachedGraph";
    case Errc::kConfigMismatch: return "ConfigMismatch";
    case Errc::kEmptySplit: return "EmptySplit";
    case Errc::kLabelSchemaMismatch: return "LabelSchemaMismatch";
    case Errc::kLayoutMismatch: return "LayoutMismatch";
    case Errc::kInvalidSpec: return "InvalidSpec";
    case Errc::kUnlabeledCollection: return "UnlabeledCollection";
    case Errc::kDegenerateLabels: return "DegenerateLabels";
    case Errc::kZeroVariance: return "ZeroVariance";
    case Errc::kDimMismatch: return "DimMismatch";
    case Errc::kEmptyGallery: return "EmptyGallery";
  }
  return "Unknown";
}

}  // namespace w2t
