// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/nn/optim.hpp"

#include <cmath>
#include <numbers>

#include "w2t/error.hpp"

namespace w2t::nn {

void AdamW::step(ParamStore& params, const GradientMap& grads, double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (auto& group : params.groups()) {
    if (!group.trainable) continue;
    for (auto& named : group.tensors) {
      const Mat* g = grads.find(named.tensor);
      if (!g) continue;
      Mat& p = named.tensor.mutable_value();
      if (g->rows() != p.rows() || g->cols() != p.cols())
        throw Error(Errc::kShapeMismatch, "gradient shape differs for " + named.name);
      auto& st = state_[group.name + "/" + named.name];
      if (st.m.size() == 0) {
        st.m = Mat::Zero(p.rows(), p.cols());
        st.v = Mat::Zero(p.rows(), p.cols());
      }
      st.m = config_.beta1 * st.m + (1.0 - config_.beta1) * *g;
      st.v = config_.beta2 * st.v + (1.0 - config_.beta2) * g->cwiseProduct(*g);
      p.array() -= lr * ((st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + config_.eps) +
                         config_.weight_decay * p.array());
    }
  }
}

Schedule lr_schedule(int epoch, int total, double base_lr, int warmup_epochs) {
  if (epoch < warmup_epochs) return {base_lr, Stage::kWarmup};
  const int span = total - warmup_epochs;
  if (span <= 0) return {base_lr, Stage::kFull};
  const double t = static_cast<double>(epoch - warmup_epochs) / static_cast<double>(span);
  return {base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t)), Stage::kFull};
}

}  // namespace w2t::nn
