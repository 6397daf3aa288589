// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <unordered_map>

#include "w2t/nn/params.hpp"

namespace w2t::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

/// Decoupled-weight-decay Adam with bias correction. Frozen groups and tensors
/// without a gradient entry are skipped entirely, so they stay bitwise
/// unchanged.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(ParamStore& params, const GradientMap& grads, double lr);

  long long step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }

 private:
  struct Moments {
    Mat m;
    Mat v;
  };
  AdamWConfig config_;
  long long step_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

enum class Stage { kWarmup, kFull };

struct Schedule {
  double lr = 0.0;
  Stage stage = Stage::kFull;
};

/// Constant base_lr with stage kWarmup for epoch < warmup_epochs, then cosine
/// annealing lr = base_lr * (1 + cos(pi * t / T)) / 2 with t = epoch - warmup
/// and T = total - warmup.
Schedule lr_schedule(int epoch, int total, double base_lr, int warmup_epochs);

}  // namespace w2t::nn
