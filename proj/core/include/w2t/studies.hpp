// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "w2t/encoder.hpp"
#include "w2t/interchange.hpp"
#include "w2t/metrics.hpp"

namespace w2t::evalx {

/// Flat named-metric bundle with optional per-item breakdown rows.
struct EvalReport {
  std::string kind;  // classification | regression | retrieval | invariance | ablation
  std::map<std::string, double> metrics;
  std::vector<std::map<std::string, std::string>> rows;
  std::map<std::string, std::string> meta;

  std::string to_json() const;
  /// rows when present, otherwise one "metric,value" line per metric.
  std::string to_csv() const;
  void write(const std::filesystem::path& json_path, const std::filesystem::path& csv_path) const;
};

std::uint64_t fnv1a64(const std::string& text);
std::string hex64(std::uint64_t value);

/// Test-split (by default) metrics of a trained model. Regression reports
/// also carry *_noiseless entries when the collection has a truth.json.
EvalReport evaluate(const encoder::Encoder& model, const interchange::Collection& collection,
                    interchange::Split split = interchange::Split::kTest);

struct InvarianceOptions {
  std::vector<double> alphas = {0.0, 0.01, 0.1, 0.5, 1.0};
  int transforms_per_alpha = 30;
  std::uint64_t seed = 5;
  /// 0 keeps every checkpoint of the split.
  int max_checkpoints = 0;
  interchange::Split split = interchange::Split::kTest;
  /// Regression decisions agree when |dy| <= this.
  double regression_tolerance = 0.01;
};

struct InvariancePoint {
  double alpha = 0.0;
  int transforms = 0;
  int checkpoints = 0;
  double mean_drift = 0.0;
  double drift_ci = 0.0;  // half-width, 1.96 standard errors
  double max_drift = 0.0;
  double agreement = 0.0;
  double agreement_ci = 0.0;
  double min_agreement = 0.0;
};

/// Relative L2 embedding drift and decision agreement under random GL(r)
/// reparameterization of every position, aggregated per transform.
std::vector<InvariancePoint> invariance_study(const encoder::Encoder& model,
                                              const interchange::Collection& collection,
                                              const InvarianceOptions& options);
EvalReport invariance_report(const std::vector<InvariancePoint>& points);

struct AblationRow {
  encoder::Mode mode = encoder::Mode::kFull;
  std::map<std::string, double> metrics;
  int best_epoch = -1;
  double train_seconds = 0.0;
};

/// Trains each mode with identical seeds and options and evaluates it on the
/// test split. Throws kUnlabeledCollection for collections without
/// supervised labels.
std::vector<AblationRow> ablation_study(const interchange::Collection& collection,
                                        const encoder::EncoderConfig& base,
                                        const encoder::TrainOptions& options,
                                        const std::vector<encoder::Mode>& modes);
EvalReport ablation_report(const std::vector<AblationRow>& rows);

struct RetrievalSet {
  std::vector<std::string> query_ids, gallery_ids;
  std::vector<std::string> query_tasks, gallery_tasks;
};

/// Query and gallery splits of a task-retrieval collection.
RetrievalSet retrieval_set(const interchange::Collection& pool);

/// Encoder embeddings ranked by cosine.
RetrievalMetrics encoder_retrieval(const encoder::Encoder& model,
                                   const interchange::Collection& pool, int k = 10);
/// Raw-factor cosine baseline.
RetrievalMetrics raw_cos_retrieval(const interchange::Collection& pool, int k = 10);
EvalReport retrieval_report(const RetrievalMetrics& model, const RetrievalMetrics* baseline);

}  // namespace w2t::evalx
