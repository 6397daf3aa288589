// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

// Weight-to-token encoder.
//
//   per position p, per canonical slot k:
//     z     = W_fuse [phi_u(u_k) | phi_v(v_k)]
//     (g,b) = MLP_sigma(log1p(sigma_k))
//     tau_k = z * (1 + tanh(g)) + b
//   rank level:     tau = f_rank(tau_1..tau_r)            (shared across positions)
//   rank pooling:   t_p = sum_k sigma_k / sum_j sigma_j * tau_k
//   position level: g_p = f_pos(t_p + e_layer[l(p)] + e_module[m(p)])
//   attention pool: h = sum_p softmax_p(<q, g_p> / sqrt(d)) g_p
//   head:           y = W2 gelu(W1 h + b1) + b2

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "w2t/interchange.hpp"
#include "w2t/nn/ops.hpp"
#include "w2t/nn/params.hpp"

namespace w2t::encoder {

using interchange::LoraCheckpoint;

enum class Mode { kFull, kNoCanon, kNoRankLevel, kNoPosLevel };
enum class TaskKind { kMultilabel, kRegression };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);
std::string to_string(TaskKind task);

struct EncoderConfig {
  int d_model = 128;
  int rank_layers = 1;
  int pos_layers = 2;
  int heads = 4;
  int head_width = 64;
  int sigma_hidden = 32;
  int mlp_ratio = 4;
  int rank = 8;
  int layer_count = 4;
  int module_vocab = 256;
  int d_out = 96;
  int d_in = 96;
  int output_dim = 8;
  TaskKind task = TaskKind::kMultilabel;
  Mode mode = Mode::kFull;

  /// Throws kConfigMismatch.
  void validate() const;
  std::string to_json() const;
  static EncoderConfig from_json(const std::string& text);
};

/// Parameter-independent inputs of one checkpoint, computed once.
struct PreparedCheckpoint {
  std::string id;
  MatrixD u_rows;  // (P*r) x d_out, row p*r+k is u_k of position p
  MatrixD v_rows;  // (P*r) x d_in
  VectorD sigma;   // P*r
  MatrixD raw;     // P x (d_out*r + r*d_in); kNoCanon only
  std::vector<Eigen::Index> layers;
  std::vector<Eigen::Index> modules;

  Eigen::Index positions() const { return static_cast<Eigen::Index>(layers.size()); }
};

struct TransformerBlock {
  nn::Tensor ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o;
  nn::Tensor ln2_g, ln2_b, w_1, b_1, w_2, b_2;

  /// Pre-LayerNorm block: x + MHA(LN(x)), then + MLP(LN(.)), attention
  /// restricted to each segment.
  nn::Tensor forward(const nn::Tensor& x, const nn::Offsets& segments, int heads) const;
};

/// sum-normalized sigma weights per segment; uniform when a segment's
/// spectrum sums to zero.
VectorD rank_pool_weights(const VectorD& sigma, const nn::Offsets& segments);
nn::Tensor rank_pool(const nn::Tensor& tokens, const VectorD& sigma, const nn::Offsets& segments);
nn::Tensor attention_pool(const nn::Tensor& g, const nn::Tensor& query, const nn::Offsets& segments);

class Encoder {
 public:
  Encoder(EncoderConfig config, std::uint64_t seed);
  Encoder(Encoder&&) noexcept = default;
  Encoder& operator=(Encoder&&) noexcept = default;
  Encoder(const Encoder&) = delete;
  Encoder& operator=(const Encoder&) = delete;

  const EncoderConfig& config() const noexcept { return config_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Canonizes (or flattens, in kNoCanon) every position in key order.
  /// Throws kConfigMismatch when ranks, dimensions or layer/module indices
  /// do not fit the config.
  PreparedCheckpoint prepare(const LoraCheckpoint& ckpt) const;

  nn::Tensor tokenize(const nn::Tensor& u_rows, const nn::Tensor& v_rows,
                      const nn::Tensor& sigma) const;
  /// Embeddings h, one row per checkpoint.
  nn::Tensor embed(const std::vector<const PreparedCheckpoint*>& batch) const;
  nn::Tensor head(const nn::Tensor& h) const;

  /// Inference helpers (no graph recorded).
  VectorD encode(const LoraCheckpoint& ckpt) const;
  MatrixD embed_all(const std::vector<PreparedCheckpoint>& items, std::size_t batch = 64) const;
  MatrixD predict_all(const std::vector<PreparedCheckpoint>& items, std::size_t batch = 64) const;

  /// Turns every transformer block into the identity map (zero output
  /// projections).
  void make_blocks_identity();

  /// Writes encoder.json plus a parameter snapshot into dir.
  void save(const std::filesystem::path& dir, int epoch = 0) const;
  static Encoder load(const std::filesystem::path& dir);

  /// Group names that stay trainable during the warmup stage.
  static const std::vector<std::string>& warmup_groups();

 private:
  TransformerBlock make_block(const std::string& group, const std::string& prefix,
                              std::mt19937_64& rng);

  EncoderConfig config_;
  std::uint64_t seed_ = 0;
  nn::ParamStore params_;

  nn::Tensor phi_u_w_, phi_u_b_, phi_v_w_, phi_v_b_, fuse_w_, fuse_b_;
  nn::Tensor raw_w_, raw_b_;
  nn::Tensor sig_w1_, sig_b1_, sig_w2_, sig_b2_;
  std::vector<TransformerBlock> rank_blocks_, pos_blocks_;
  nn::Tensor e_layer_, e_module_;
  nn::Tensor pool_query_;
  nn::Tensor head_w1_, head_b1_, head_w2_, head_b2_;
};

/// Flattened B and A payloads in canonical serialization order.
VectorD flatten_raw(const LoraCheckpoint& ckpt);

/// Cosine of the flattened payloads. Throws kLayoutMismatch.
double raw_cos_similarity(const LoraCheckpoint& a, const LoraCheckpoint& b);

// -- training ----------------------------------------------------------------

struct TrainOptions {
  int epochs = 45;
  int batch = 64;
  double weight_decay = 1e-3;
  double base_lr = 1e-3;
  int warmup = 4;
  std::uint64_t seed = 1;
  /// When set, the collection schema must match (kLabelSchemaMismatch).
  std::optional<interchange::LabelSchema> expect_schema;
  std::function<void(const struct EpochLog&)> on_epoch;
};

struct EpochLog {
  int epoch = 0;
  std::string stage;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::map<std::string, double> val_metrics;
};

struct TrainResult {
  Encoder encoder;
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

/// Derives d_out/d_in/rank/layer_count/output_dim from the collection.
EncoderConfig config_for(const interchange::Collection& collection, Mode mode);

/// Loads and prepares the given ids in order.
std::vector<PreparedCheckpoint> prepare_all(const Encoder& encoder,
                                            const interchange::Collection& collection,
                                            const std::vector<std::string>& ids);

/// Label matrix (N x K for multilabel, N x 1 for regression) for ids.
MatrixD label_matrix(const interchange::Collection& collection, const std::vector<std::string>& ids);

/// Supervised training with warmup gating and cosine annealing; keeps the
/// parameters of the epoch with the lowest validation loss.
TrainResult train(const interchange::Collection& collection, const EncoderConfig& config,
                  const TrainOptions& options);

std::string train_log_json(const std::vector<EpochLog>& log);

}  // namespace w2t::encoder
