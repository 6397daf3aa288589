// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded synthetic LoRA collections with planted checkpoint-level signal.
//
// Every position p owns a fixed table of orthonormal direction pairs
// (u_{p,c}, v_{p,c}), drawn once from the seed. A checkpoint's update at p is
//
//   dW_p = sum_{c active} amp_c u_{p,c} v_{p,c}^T + sum_j n_j x_j y_j^T
//
// with random unit noise directions (x_j, y_j) filling the remaining rank
// slots. The exact SVD (U, s, V) of dW_p is then refactored as
// B = U diag(sqrt s) G, A = G^-1 diag(sqrt s) V^T with a per-position random
// G, so the raw factors carry no directly readable signal.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "w2t/interchange.hpp"

namespace w2t::synthgen {

struct GenSpec {
  int n_checkpoints = 2000;
  int layer_count = 4;
  std::vector<std::uint8_t> modules = {0, 2};  // q, v
  int d_out = 96;
  int d_in = 96;
  int rank = 8;
  interchange::LabelSchema label_schema = interchange::LabelSchema::kMultilabel;
  int label_dim = 8;
  double signal_strength = 1.0;
  double noise_std = 0.1;
  double gl_alpha = 1.0;
  std::uint64_t seed = 13;
  double attribute_prior = 0.3;
  // regression
  double amplitude_jitter = 0.15;
  double target_noise = 0.02;
  // task retrieval
  int tasks = 4;
  int components_per_task = 2;
  int queries = 80;
  // amplitude of a background component present in every pool checkpoint
  double shared_strength = 3.0;

  /// Throws kInvalidSpec.
  void validate() const;
  /// Number of labeled planted components per position.
  int planted_components() const;
  /// Columns of the planted table, including the shared background column.
  int table_components() const;
};

struct PlantedPosition {
  interchange::PositionKey key;
  MatrixD u;  // d_out x C, orthonormal columns
  MatrixD v;  // d_in x C
};

/// Deterministic in (seed, position, component); the first c columns agree to
/// rounding no matter how many components are requested.
std::vector<PlantedPosition> planted_directions(const GenSpec& spec);

/// Amplitude of planted component c before jitter.
double ladder_amplitude(const GenSpec& spec, int c);

/// Weights of the regression functional, one per attribute.
std::vector<double> regression_weights(const GenSpec& spec);

struct Generated {
  interchange::CollectionManifest manifest;
  std::vector<interchange::LoraCheckpoint> checkpoints;
  std::vector<std::vector<int>> active;   // planted components per checkpoint
  std::vector<double> noiseless_targets;  // regression only
  double kappa = 0.0;
  double mu = 0.0;
};

/// In-memory generation; byte-for-byte reproducible for a given spec.
Generated generate_in_memory(const GenSpec& spec);

/// Writes manifest.json, truth.json and checkpoints/<id>.lwc into dir.
interchange::CollectionManifest generate(const GenSpec& spec, const std::filesystem::path& dir);

std::string spec_to_json(const GenSpec& spec);
GenSpec spec_from_json(const std::string& text);

struct Truth {
  GenSpec spec;
  std::vector<std::string> ids;
  std::vector<double> noiseless_targets;  // parallel to ids, regression only
};

/// Reads truth.json next to a manifest (or in a collection directory).
Truth read_truth(const std::filesystem::path& collection);

// -- attainability oracle ----------------------------------------------------

struct ProbeReport {
  interchange::LabelSchema schema = interchange::LabelSchema::kMultilabel;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double mauroc = 0.0;
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double pearson = 0.0;  // against the noiseless target
  double spearman = 0.0;
  double mae = 0.0;
};

/// Features sum_k sigma_k |<u_k, u_{p,c}>| per (position, component) from the
/// canonical decomposition of a checkpoint.
VectorD probe_features(const interchange::LoraCheckpoint& ckpt,
                       const std::vector<PlantedPosition>& planted);

/// Fits a linear probe on the train split and reports test metrics. Throws
/// kUnlabeledCollection.
ProbeReport oracle_probe(const std::filesystem::path& collection);

}  // namespace w2t::synthgen
