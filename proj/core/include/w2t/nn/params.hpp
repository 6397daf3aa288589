// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "w2t/nn/tensor.hpp"

namespace w2t::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Unit of stage gating: all tensors of a group are trainable or frozen together.
struct ParamGroup {
  std::string name;
  std::vector<NamedTensor> tensors;
  bool trainable = true;
};

/// Ordered collection of parameter groups. Tensor names are unique across the
/// whole store and are addressed as "group/name".
class ParamStore {
 public:
  Tensor add(const std::string& group, const std::string& name, Mat init);

  Tensor get(const std::string& full_name) const;
  bool contains(const std::string& full_name) const;

  /// Toggles requires_grad on every tensor of the group.
  void set_trainable(const std::string& group, bool trainable);
  bool trainable(const std::string& group) const;

  std::vector<ParamGroup>& groups() { return groups_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const ParamGroup& group(const std::string& name) const;

  std::size_t parameter_count() const;

  /// Deep copy: fresh nodes with identical values and flags.
  ParamStore clone() const;
  /// Copies values from a store with identical layout.
  void copy_values_from(const ParamStore& other);

 private:
  ParamGroup& find_group(const std::string& name);
  std::vector<ParamGroup> groups_;
};

enum class InitScheme { kXavierUniform, kNormal, kZeros };

/// Deterministic under a fixed rng state. Xavier uses
/// bound = sqrt(6 / (fan_in + fan_out)) with fan_in = rows, fan_out = cols.
Mat seeded_init(Eigen::Index rows, Eigen::Index cols, InitScheme scheme, std::mt19937_64& rng,
                double stddev = 0.02);

}  // namespace w2t::nn
