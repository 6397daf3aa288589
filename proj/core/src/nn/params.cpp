// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/nn/params.hpp"

#include <cmath>

#include "w2t/error.hpp"

namespace w2t::nn {

Tensor ParamStore::add(const std::string& group, const std::string& name, Mat init) {
  const std::string full = group + "/" + name;
  if (contains(full)) throw Error(Errc::kInvalidArgument, "duplicate parameter " + full);
  for (const auto& g : groups_)
    for (const auto& t : g.tensors)
      if (t.name == name) throw Error(Errc::kInvalidArgument, "parameter name reused: " + name);
  ParamGroup* target = nullptr;
  for (auto& g : groups_)
    if (g.name == group) target = &g;
  if (!target) {
    groups_.push_back(ParamGroup{group, {}, true});
    target = &groups_.back();
  }
  Tensor t(std::move(init), target->trainable);
  target->tensors.push_back({name, t});
  return t;
}

Tensor ParamStore::get(const std::string& full_name) const {
  const auto slash = full_name.find('/');
  const std::string group = full_name.substr(0, slash);
  const std::string name = slash == std::string::npos ? std::string() : full_name.substr(slash + 1);
  for (const auto& g : groups_)
    if (g.name == group)
      for (const auto& t : g.tensors)
        if (t.name == name) return t.tensor;
  throw Error(Errc::kInvalidArgument, "unknown parameter " + full_name);
}

bool ParamStore::contains(const std::string& full_name) const {
  const auto slash = full_name.find('/');
  if (slash == std::string::npos) return false;
  const std::string group = full_name.substr(0, slash);
  const std::string name = full_name.substr(slash + 1);
  for (const auto& g : groups_)
    if (g.name == group)
      for (const auto& t : g.tensors)
        if (t.name == name) return true;
  return false;
}

ParamGroup& ParamStore::find_group(const std::string& name) {
  for (auto& g : groups_)
    if (g.name == name) return g;
  throw Error(Errc::kInvalidArgument, "unknown parameter group " + name);
}

const ParamGroup& ParamStore::group(const std::string& name) const {
  for (const auto& g : groups_)
    if (g.name == name) return g;
  throw Error(Errc::kInvalidArgument, "unknown parameter group " + name);
}

void ParamStore::set_trainable(const std::string& group, bool trainable) {
  auto& g = find_group(group);
  g.trainable = trainable;
  for (auto& t : g.tensors) t.tensor.set_requires_grad(trainable);
}

bool ParamStore::trainable(const std::string& group) const { return this->group(group).trainable; }

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& g : groups_)
    for (const auto& t : g.tensors) n += static_cast<std::size_t>(t.tensor.size());
  return n;
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& g : groups_) {
    ParamGroup copy{g.name, {}, g.trainable};
    for (const auto& t : g.tensors) copy.tensors.push_back({t.name, Tensor(t.tensor.value(), g.trainable)});
    out.groups_.push_back(std::move(copy));
  }
  return out;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.groups_.size() != groups_.size())
    throw Error(Errc::kShapeMismatch, "parameter stores differ in group count");
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    auto& dst = groups_[i];
    const auto& src = other.groups_[i];
    if (dst.name != src.name || dst.tensors.size() != src.tensors.size())
      throw Error(Errc::kShapeMismatch, "parameter group layout differs: " + dst.name);
    for (std::size_t j = 0; j < dst.tensors.size(); ++j) {
      const auto& s = src.tensors[j].tensor.value();
      auto& d = dst.tensors[j].tensor.mutable_value();
      if (s.rows() != d.rows() || s.cols() != d.cols())
        throw Error(Errc::kShapeMismatch, "shape differs for " + dst.tensors[j].name);
      d = s;
    }
  }
}

Mat seeded_init(Eigen::Index rows, Eigen::Index cols, InitScheme scheme, std::mt19937_64& rng,
                double stddev) {
  Mat out(rows, cols);
  switch (scheme) {
    case InitScheme::kZeros:
      out.setZero();
      break;
    case InitScheme::kXavierUniform: {
      const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = dist(rng);
      break;
    }
    case InitScheme::kNormal: {
      std::normal_distribution<double> dist(0.0, stddev);
      for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = dist(rng);
      break;
    }
  }
  return out;
}

}  // namespace w2t::nn
