// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "w2t/canon.hpp"
#include "w2t/error.hpp"
#include "w2t/nn/snapshot.hpp"

namespace w2t::encoder {

using json = nlohmann::json;
using nn::Mat;
using nn::Offsets;
using nn::Tensor;

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kFull: return "full";
    case Mode::kNoCanon: return "no_canon";
    case Mode::kNoRankLevel: return "no_rank_level";
    case Mode::kNoPosLevel: return "no_pos_level";
  }
  return "full";
}

Mode parse_mode(const std::string& text) {
  if (text == "full") return Mode::kFull;
  if (text == "no_canon") return Mode::kNoCanon;
  if (text == "no_rank_level") return Mode::kNoRankLevel;
  if (text == "no_pos_level") return Mode::kNoPosLevel;
  throw Error(Errc::kInvalidArgument, "unknown encoder mode: " + text);
}

std::string to_string(TaskKind task) {
  return task == TaskKind::kMultilabel ? "multilabel" : "regression";
}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::kConfigMismatch, what); };
  if (d_model <= 0 || heads <= 0 || d_model % heads != 0) fail("d_model must be divisible by heads");
  if (rank_layers < 0 || pos_layers < 0) fail("negative layer count");
  if (head_width <= 0 || sigma_hidden <= 0 || mlp_ratio <= 0) fail("non-positive width");
  if (rank <= 0 || layer_count <= 0 || module_vocab <= 0) fail("rank, layer_count, module_vocab must be positive");
  if (d_out < rank || d_in < rank) fail("d_out and d_in must be at least rank");
  if (output_dim <= 0) fail("output_dim must be positive");
  if (task == TaskKind::kRegression && output_dim != 1) fail("regression head emits one value");
}

std::string EncoderConfig::to_json() const {
  json j;
  j["d_model"] = d_model;
  j["rank_layers"] = rank_layers;
  j["pos_layers"] = pos_layers;
  j["heads"] = heads;
  j["head_width"] = head_width;
  j["sigma_hidden"] = sigma_hidden;
  j["mlp_ratio"] = mlp_ratio;
  j["rank"] = rank;
  j["layer_count"] = layer_count;
  j["module_vocab"] = module_vocab;
  j["d_out"] = d_out;
  j["d_in"] = d_in;
  j["output_dim"] = output_dim;
  j["task"] = to_string(task);
  j["mode"] = to_string(mode);
  return j.dump(2);
}

EncoderConfig EncoderConfig::from_json(const std::string& text) {
  EncoderConfig c;
  try {
    const json j = json::parse(text);
    c.d_model = j.at("d_model").get<int>();
    c.rank_layers = j.at("rank_layers").get<int>();
    c.pos_layers = j.at("pos_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.head_width = j.at("head_width").get<int>();
    c.sigma_hidden = j.value("sigma_hidden", c.sigma_hidden);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.rank = j.at("rank").get<int>();
    c.layer_count = j.at("layer_count").get<int>();
    c.module_vocab = j.at("module_vocab").get<int>();
    c.d_out = j.at("d_out").get<int>();
    c.d_in = j.at("d_in").get<int>();
    c.output_dim = j.at("output_dim").get<int>();
    c.task = j.at("task").get<std::string>() == "regression" ? TaskKind::kRegression
                                                             : TaskKind::kMultilabel;
    c.mode = parse_mode(j.at("mode").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(Errc::kConfigMismatch, std::string("bad encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

// -- blocks ------------------------------------------------------------------

Tensor TransformerBlock::forward(const Tensor& x, const Offsets& segments, int heads) const {
  const Eigen::Index d = x.cols();
  Tensor h = nn::layer_norm_rows(x, ln1_g, ln1_b);
  Tensor qkv = nn::linear(h, w_qkv, b_qkv);
  Tensor att = nn::segment_attention(nn::slice_cols(qkv, 0, d), nn::slice_cols(qkv, d, d),
                                     nn::slice_cols(qkv, 2 * d, d), segments, heads);
  Tensor y = nn::add(x, nn::linear(att, w_o, b_o));
  Tensor h2 = nn::layer_norm_rows(y, ln2_g, ln2_b);
  Tensor m = nn::linear(nn::gelu(nn::linear(h2, w_1, b_1)), w_2, b_2);
  return nn::add(y, m);
}

VectorD rank_pool_weights(const VectorD& sigma, const Offsets& segments) {
  VectorD w(sigma.size());
  for (std::size_t g = 0; g + 1 < segments.size(); ++g) {
    const Eigen::Index lo = segments[g];
    const Eigen::Index n = segments[g + 1] - lo;
    const double total = sigma.segment(lo, n).sum();
    if (total > 0.0) {
      w.segment(lo, n) = sigma.segment(lo, n) / total;
    } else {
      w.segment(lo, n).setConstant(1.0 / static_cast<double>(n));
    }
  }
  return w;
}

Tensor rank_pool(const Tensor& tokens, const VectorD& sigma, const Offsets& segments) {
  if (sigma.size() != tokens.rows())
    throw Error(Errc::kShapeMismatch, "rank_pool: one sigma per token required");
  Mat w = rank_pool_weights(sigma, segments);
  return nn::segment_weighted_sum(tokens, Tensor::constant(std::move(w)), segments);
}

Tensor attention_pool(const Tensor& g, const Tensor& query, const Offsets& segments) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(g.cols()));
  Tensor scores = nn::scale(nn::matmul(g, query), inv);
  return nn::segment_weighted_sum(g, nn::segment_softmax(scores, segments), segments);
}

// -- encoder -----------------------------------------------------------------

namespace {

Mat ones_row(Eigen::Index n) { return Mat::Ones(1, n); }
Mat zeros(Eigen::Index r, Eigen::Index c) { return Mat::Zero(r, c); }

}  // namespace

const std::vector<std::string>& Encoder::warmup_groups() {
  static const std::vector<std::string> groups = {"projector", "embeddings", "head"};
  return groups;
}

TransformerBlock Encoder::make_block(const std::string& group, const std::string& prefix,
                                     std::mt19937_64& rng) {
  const Eigen::Index d = config_.d_model;
  const Eigen::Index hidden = d * config_.mlp_ratio;
  auto xavier = [&](Eigen::Index r, Eigen::Index c) {
    return nn::seeded_init(r, c, nn::InitScheme::kXavierUniform, rng);
  };
  TransformerBlock b;
  b.ln1_g = params_.add(group, prefix + ".ln1_g", ones_row(d));
  b.ln1_b = params_.add(group, prefix + ".ln1_b", zeros(1, d));
  b.w_qkv = params_.add(group, prefix + ".wqkv", xavier(d, 3 * d));
  b.b_qkv = params_.add(group, prefix + ".bqkv", zeros(1, 3 * d));
  b.w_o = params_.add(group, prefix + ".wo", xavier(d, d));
  b.b_o = params_.add(group, prefix + ".bo", zeros(1, d));
  b.ln2_g = params_.add(group, prefix + ".ln2_g", ones_row(d));
  b.ln2_b = params_.add(group, prefix + ".ln2_b", zeros(1, d));
  b.w_1 = params_.add(group, prefix + ".w1", xavier(d, hidden));
  b.b_1 = params_.add(group, prefix + ".b1", zeros(1, hidden));
  b.w_2 = params_.add(group, prefix + ".w2", xavier(hidden, d));
  b.b_2 = params_.add(group, prefix + ".b2", zeros(1, d));
  return b;
}

Encoder::Encoder(EncoderConfig config, std::uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const Eigen::Index d = config_.d_model;
  auto xavier = [&](Eigen::Index r, Eigen::Index c) {
    return nn::seeded_init(r, c, nn::InitScheme::kXavierUniform, rng);
  };
  auto normal = [&](Eigen::Index r, Eigen::Index c) {
    return nn::seeded_init(r, c, nn::InitScheme::kNormal, rng, 0.02);
  };

  if (config_.mode == Mode::kNoCanon) {
    const Eigen::Index raw = static_cast<Eigen::Index>(config_.d_out) * config_.rank +
                             static_cast<Eigen::Index>(config_.rank) * config_.d_in;
    raw_w_ = params_.add("projector", "raw_w", xavier(raw, d));
    raw_b_ = params_.add("projector", "raw_b", zeros(1, d));
  } else {
    phi_u_w_ = params_.add("projector", "phi_u_w", xavier(config_.d_out, d));
    phi_u_b_ = params_.add("projector", "phi_u_b", zeros(1, d));
    phi_v_w_ = params_.add("projector", "phi_v_w", xavier(config_.d_in, d));
    phi_v_b_ = params_.add("projector", "phi_v_b", zeros(1, d));
    fuse_w_ = params_.add("projector", "fuse_w", xavier(2 * d, d));
    fuse_b_ = params_.add("projector", "fuse_b", zeros(1, d));
    sig_w1_ = params_.add("modulation", "sigma_w1", xavier(1, config_.sigma_hidden));
    sig_b1_ = params_.add("modulation", "sigma_b1", zeros(1, config_.sigma_hidden));
    sig_w2_ = params_.add("modulation", "sigma_w2", zeros(config_.sigma_hidden, 2 * d));
    sig_b2_ = params_.add("modulation", "sigma_b2", zeros(1, 2 * d));
    if (config_.mode != Mode::kNoRankLevel) {
      for (int i = 0; i < config_.rank_layers; ++i)
        rank_blocks_.push_back(make_block("rank_encoder", "rank.block" + std::to_string(i), rng));
    }
  }

  e_layer_ = params_.add("embeddings", "e_layer", normal(config_.layer_count, d));
  e_module_ = params_.add("embeddings", "e_module", normal(config_.module_vocab, d));

  if (config_.mode != Mode::kNoPosLevel) {
    for (int i = 0; i < config_.pos_layers; ++i)
      pos_blocks_.push_back(make_block("pos_encoder", "pos.block" + std::to_string(i), rng));
  }

  pool_query_ = params_.add("pool", "query", normal(d, 1));

  head_w1_ = params_.add("head", "head_w1", xavier(d, config_.head_width));
  head_b1_ = params_.add("head", "head_b1", zeros(1, config_.head_width));
  head_w2_ = params_.add("head", "head_w2", xavier(config_.head_width, config_.output_dim));
  head_b2_ = params_.add("head", "head_b2", zeros(1, config_.output_dim));
}

PreparedCheckpoint Encoder::prepare(const LoraCheckpoint& ckpt) const {
  auto fail = [&](const std::string& what) {
    throw Error(Errc::kConfigMismatch, ckpt.id + ": " + what);
  };
  if (ckpt.positions.empty()) fail("no positions");
  std::vector<const interchange::Position*> order;
  order.reserve(ckpt.positions.size());
  for (const auto& p : ckpt.positions) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->key < b->key; });

  const Eigen::Index r = config_.rank;
  const auto n_pos = static_cast<Eigen::Index>(order.size());
  PreparedCheckpoint out;
  out.id = ckpt.id;
  const bool raw_mode = config_.mode == Mode::kNoCanon;
  if (raw_mode) {
    out.raw.resize(n_pos, config_.d_out * r + r * config_.d_in);
  } else {
    out.u_rows.resize(n_pos * r, config_.d_out);
    out.v_rows.resize(n_pos * r, config_.d_in);
    out.sigma.resize(n_pos * r);
  }
  for (Eigen::Index p = 0; p < n_pos; ++p) {
    const auto& pos = *order[static_cast<std::size_t>(p)];
    const auto& fp = pos.factors;
    if (fp.rank() != r) fail("rank " + std::to_string(fp.rank()) + " != " + std::to_string(r));
    if (fp.d_out() != config_.d_out || fp.d_in() != config_.d_in) fail("factor dimensions");
    if (pos.key.layer_index >= static_cast<std::uint32_t>(config_.layer_count))
      fail("layer index out of range");
    if (pos.key.module_code >= config_.module_vocab) fail("module code out of range");
    out.layers.push_back(pos.key.layer_index);
    out.modules.push_back(pos.key.module_code);
    if (raw_mode) {
      const Eigen::Index nb = fp.b.size();
      for (Eigen::Index i = 0; i < nb; ++i) out.raw(p, i) = fp.b.data()[i];
      for (Eigen::Index i = 0; i < fp.a.size(); ++i) out.raw(p, nb + i) = fp.a.data()[i];
    } else {
      const auto c = canon::canonize(fp);
      out.u_rows.middleRows(p * r, r) = c.u.transpose().cast<double>();
      out.v_rows.middleRows(p * r, r) = c.v.transpose().cast<double>();
      out.sigma.segment(p * r, r) = c.sigma.cast<double>();
    }
  }
  return out;
}

Tensor Encoder::tokenize(const Tensor& u_rows, const Tensor& v_rows, const Tensor& sigma) const {
  if (u_rows.cols() != config_.d_out || v_rows.cols() != config_.d_in ||
      u_rows.rows() != v_rows.rows() || sigma.rows() != u_rows.rows() || sigma.cols() != 1)
    throw Error(Errc::kShapeMismatch, "tokenize: incompatible inputs");
  const Eigen::Index d = config_.d_model;
  Tensor pu = nn::linear(u_rows, phi_u_w_, phi_u_b_);
  Tensor pv = nn::linear(v_rows, phi_v_w_, phi_v_b_);
  Tensor z = nn::linear(nn::concat_cols({pu, pv}), fuse_w_, fuse_b_);
  Tensor hid = nn::gelu(nn::linear(nn::log1p(sigma), sig_w1_, sig_b1_));
  Tensor gb = nn::linear(hid, sig_w2_, sig_b2_);
  Tensor gamma = nn::slice_cols(gb, 0, d);
  Tensor beta = nn::slice_cols(gb, d, d);
  return nn::add(nn::mul(z, nn::add_scalar(nn::tanh(gamma), 1.0)), beta);
}

Tensor Encoder::embed(const std::vector<const PreparedCheckpoint*>& batch) const {
  if (batch.empty()) throw Error(Errc::kShapeMismatch, "embed: empty batch");
  const Eigen::Index r = config_.rank;
  Offsets ckpt_offsets{0};
  std::vector<Eigen::Index> layers, modules;
  for (const auto* item : batch) {
    ckpt_offsets.push_back(ckpt_offsets.back() + item->positions());
    layers.insert(layers.end(), item->layers.begin(), item->layers.end());
    modules.insert(modules.end(), item->modules.begin(), item->modules.end());
  }
  const Eigen::Index n_pos = ckpt_offsets.back();

  Tensor t;
  if (config_.mode == Mode::kNoCanon) {
    Mat raw(n_pos, batch.front()->raw.cols());
    Eigen::Index row = 0;
    for (const auto* item : batch) {
      if (item->raw.cols() != raw.cols() || item->raw.rows() != item->positions())
        throw Error(Errc::kConfigMismatch, "checkpoint not prepared for no_canon mode");
      raw.middleRows(row, item->positions()) = item->raw;
      row += item->positions();
    }
    t = nn::linear(Tensor::constant(std::move(raw)), raw_w_, raw_b_);
  } else {
    Mat u(n_pos * r, config_.d_out), v(n_pos * r, config_.d_in);
    VectorD s(n_pos * r);
    Eigen::Index row = 0;
    for (const auto* item : batch) {
      const Eigen::Index n = item->positions() * r;
      if (item->u_rows.rows() != n)
        throw Error(Errc::kConfigMismatch, "checkpoint not prepared for canonical modes");
      u.middleRows(row, n) = item->u_rows;
      v.middleRows(row, n) = item->v_rows;
      s.segment(row, n) = item->sigma;
      row += n;
    }
    Tensor tau = tokenize(Tensor::constant(std::move(u)), Tensor::constant(std::move(v)),
                          Tensor::constant(Mat(s)));
    const Offsets rank_segments = nn::uniform_offsets(n_pos, r);
    for (const auto& block : rank_blocks_) tau = block.forward(tau, rank_segments, config_.heads);
    t = rank_pool(tau, s, rank_segments);
  }

  Tensor g = nn::add(t, nn::add(nn::embedding(e_layer_, layers), nn::embedding(e_module_, modules)));
  for (const auto& block : pos_blocks_) g = block.forward(g, ckpt_offsets, config_.heads);
  return attention_pool(g, pool_query_, ckpt_offsets);
}

Tensor Encoder::head(const Tensor& h) const {
  return nn::linear(nn::gelu(nn::linear(h, head_w1_, head_b1_)), head_w2_, head_b2_);
}

VectorD Encoder::encode(const LoraCheckpoint& ckpt) const {
  nn::NoGradGuard guard;
  const PreparedCheckpoint p = prepare(ckpt);
  return embed({&p}).value().row(0).transpose();
}

MatrixD Encoder::embed_all(const std::vector<PreparedCheckpoint>& items, std::size_t batch) const {
  nn::NoGradGuard guard;
  MatrixD out(static_cast<Eigen::Index>(items.size()), config_.d_model);
  batch = std::max<std::size_t>(batch, 1);
  for (std::size_t lo = 0; lo < items.size(); lo += batch) {
    const std::size_t hi = std::min(items.size(), lo + batch);
    std::vector<const PreparedCheckpoint*> ptrs;
    for (std::size_t i = lo; i < hi; ++i) ptrs.push_back(&items[i]);
    out.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)) =
        embed(ptrs).value();
  }
  return out;
}

MatrixD Encoder::predict_all(const std::vector<PreparedCheckpoint>& items, std::size_t batch) const {
  nn::NoGradGuard guard;
  const MatrixD h = embed_all(items, batch);
  return head(Tensor::constant(h)).value();
}

void Encoder::make_blocks_identity() {
  for (auto* blocks : {&rank_blocks_, &pos_blocks_}) {
    for (auto& b : *blocks) {
      b.w_o.mutable_value().setZero();
      b.b_o.mutable_value().setZero();
      b.w_2.mutable_value().setZero();
      b.b_2.mutable_value().setZero();
    }
  }
}

void Encoder::save(const std::filesystem::path& dir, int epoch) const {
  std::filesystem::create_directories(dir);
  json j = json::parse(config_.to_json());
  j["seed"] = seed_;
  std::ofstream out(dir / "encoder.json", std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + (dir / "encoder.json").string());
  out << j.dump(2) << "\n";
  out.close();
  nn::save_snapshot(params_, nn::SnapshotMeta{seed_, epoch}, dir);
}

Encoder Encoder::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "encoder.json");
  if (!in) throw Error(Errc::kIo, "missing " + (dir / "encoder.json").string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::uint64_t seed = 0;
  try {
    seed = json::parse(ss.str()).value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw Error(Errc::kConfigMismatch, std::string("bad encoder.json: ") + e.what());
  }
  Encoder enc(EncoderConfig::from_json(ss.str()), seed);
  nn::load_snapshot(enc.params_, dir);
  return enc;
}

// -- raw baseline ------------------------------------------------------------

VectorD flatten_raw(const LoraCheckpoint& ckpt) {
  std::vector<const interchange::Position*> order;
  Eigen::Index total = 0;
  for (const auto& p : ckpt.positions) {
    order.push_back(&p);
    total += p.factors.b.size() + p.factors.a.size();
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->key < b->key; });
  VectorD out(total);
  Eigen::Index at = 0;
  for (const auto* p : order) {
    for (Eigen::Index i = 0; i < p->factors.b.size(); ++i) out(at++) = p->factors.b.data()[i];
    for (Eigen::Index i = 0; i < p->factors.a.size(); ++i) out(at++) = p->factors.a.data()[i];
  }
  return out;
}

double raw_cos_similarity(const LoraCheckpoint& a, const LoraCheckpoint& b) {
  if (a.positions.size() != b.positions.size())
    throw Error(Errc::kLayoutMismatch, "position counts differ");
  auto keys = [](const LoraCheckpoint& c) {
    std::vector<std::tuple<interchange::PositionKey, Eigen::Index, Eigen::Index, Eigen::Index>> k;
    for (const auto& p : c.positions)
      k.emplace_back(p.key, p.factors.d_out(), p.factors.rank(), p.factors.d_in());
    std::sort(k.begin(), k.end());
    return k;
  };
  if (keys(a) != keys(b)) throw Error(Errc::kLayoutMismatch, "position layouts differ");
  const VectorD x = flatten_raw(a);
  const VectorD y = flatten_raw(b);
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return std::clamp(x.dot(y) / (nx * ny), -1.0, 1.0);
}

}  // namespace w2t::encoder
