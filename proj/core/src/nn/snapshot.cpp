// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/nn/snapshot.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <vector>

#include <json.hpp>

#include "w2t/error.hpp"
#include "w2t/version.hpp"

namespace w2t::nn {
namespace {

using json = nlohmann::json;

}  // namespace

void save_snapshot(const ParamStore& params, const SnapshotMeta& meta,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format_version"] = kSnapshotFormatVersion;
  manifest["seed"] = meta.seed;
  manifest["epoch"] = meta.epoch;
  manifest["dtype"] = "float32_le";
  json groups = json::array();
  for (const auto& g : params.groups()) {
    json jg;
    jg["name"] = g.name;
    jg["file"] = g.name + ".bin";
    json tensors = json::array();
    std::vector<char> blob;
    for (const auto& t : g.tensors) {
      const Mat& v = t.tensor.value();
      tensors.push_back({{"name", t.name}, {"shape", {v.rows(), v.cols()}}});
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v.data()[i]));
        for (int b = 0; b < 4; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
      }
    }
    jg["tensors"] = std::move(tensors);
    groups.push_back(std::move(jg));
    std::ofstream out(dir / (g.name + ".bin"), std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot write snapshot blob for " + g.name);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  manifest["groups"] = std::move(groups);
  std::ofstream out(dir / "params.json", std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write params.json");
  out << manifest.dump(2) << "\n";
}

SnapshotMeta load_snapshot(ParamStore& params, const std::filesystem::path& dir) {
  std::ifstream in(dir / "params.json");
  if (!in) throw Error(Errc::kIo, "missing " + (dir / "params.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::kIo, std::string("params.json: ") + e.what());
  }
  SnapshotMeta meta;
  meta.seed = manifest.value("seed", std::uint64_t{0});
  meta.epoch = manifest.value("epoch", 0);
  const auto& jgroups = manifest.at("groups");
  if (jgroups.size() != params.groups().size())
    throw Error(Errc::kShapeMismatch, "snapshot group count differs from model");
  for (std::size_t gi = 0; gi < jgroups.size(); ++gi) {
    auto& g = params.groups()[gi];
    const auto& jg = jgroups[gi];
    if (jg.at("name").get<std::string>() != g.name)
      throw Error(Errc::kShapeMismatch, "snapshot group order differs at " + g.name);
    std::ifstream blob_in(dir / jg.at("file").get<std::string>(), std::ios::binary);
    if (!blob_in) throw Error(Errc::kIo, "missing blob for group " + g.name);
    std::vector<unsigned char> blob{std::istreambuf_iterator<char>(blob_in),
                                    std::istreambuf_iterator<char>()};
    const auto& jt = jg.at("tensors");
    if (jt.size() != g.tensors.size())
      throw Error(Errc::kShapeMismatch, "tensor count differs in group " + g.name);
    std::size_t at = 0;
    for (std::size_t ti = 0; ti < jt.size(); ++ti) {
      auto& t = g.tensors[ti];
      Mat& v = t.tensor.mutable_value();
      const auto shape = jt[ti].at("shape");
      if (jt[ti].at("name").get<std::string>() != t.name || shape[0].get<Eigen::Index>() != v.rows() ||
          shape[1].get<Eigen::Index>() != v.cols())
        throw Error(Errc::kShapeMismatch, "snapshot tensor differs: " + t.name);
      if (at + static_cast<std::size_t>(v.size()) * 4 > blob.size())
        throw Error(Errc::kTruncatedPayload, "blob too short for " + t.name);
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(blob[at + b]) << (8 * b);
        at += 4;
        v.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
      }
    }
    if (at != blob.size()) throw Error(Errc::kInvalidCheckpoint, "trailing bytes in blob for " + g.name);
  }
  return meta;
}

}  // namespace w2t::nn
