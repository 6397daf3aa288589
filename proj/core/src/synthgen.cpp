// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "w2t/canon.hpp"
#include "w2t/error.hpp"
#include "w2t/linalg.hpp"
#include "w2t/version.hpp"

namespace w2t::synthgen {

using interchange::LabelSchema;
using json = nlohmann::json;

namespace {

constexpr std::uint32_t kSaltPlantedU = 0x706c7561;
constexpr std::uint32_t kSaltPlantedV = 0x706c7662;
constexpr std::uint32_t kSaltCheckpoint = 0x636b7074;
constexpr std::uint32_t kSaltWeights = 0x77677473;
constexpr std::uint32_t kSaltSplit = 0x73706c74;

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t salt, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), salt,
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

MatrixD gaussian_orthonormal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  MatrixD g(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) g(r, c) = normal(rng);
  return linalg::householder_qr(g).q;
}

VectorD unit_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  VectorD x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = normal(rng);
  return x / x.norm();
}

std::vector<interchange::PositionKey> position_keys(const GenSpec& spec) {
  std::vector<std::uint8_t> mods = spec.modules;
  std::sort(mods.begin(), mods.end());
  std::vector<interchange::PositionKey> keys;
  for (int l = 0; l < spec.layer_count; ++l)
    for (auto m : mods) keys.push_back({static_cast<std::uint32_t>(l), m});
  return keys;
}

std::string checkpoint_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%05d", i);
  return buf;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void GenSpec::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::kInvalidSpec, what); };
  if (n_checkpoints < 1) fail("n_checkpoints must be positive");
  if (layer_count < 1) fail("layer_count must be positive");
  if (modules.empty()) fail("at least one module kind is required");
  {
    auto m = modules;
    std::sort(m.begin(), m.end());
    if (std::adjacent_find(m.begin(), m.end()) != m.end()) fail("duplicate module kinds");
  }
  if (rank < 1 || rank > std::min(d_out, d_in)) fail("rank must satisfy 1 <= r <= min(d_out, d_in)");
  if (!(signal_strength > 0.0) || !std::isfinite(signal_strength)) fail("signal_strength must be > 0");
  if (!(noise_std >= 0.0) || !(gl_alpha >= 0.0)) fail("noise_std and gl_alpha must be >= 0");
  if (!(attribute_prior > 0.0 && attribute_prior < 1.0)) fail("attribute_prior must be in (0, 1)");
  if (!(amplitude_jitter >= 0.0 && amplitude_jitter < 1.0)) fail("amplitude_jitter must be in [0, 1)");
  if (!(target_noise >= 0.0)) fail("target_noise must be >= 0");
  switch (label_schema) {
    case LabelSchema::kMultilabel:
    case LabelSchema::kRegression:
      if (label_dim < 1) fail("label_dim must be >= 1");
      if (label_dim > rank) fail("label_dim may not exceed rank");
      break;
    case LabelSchema::kTaskRetrieval:
      if (tasks < 1 || components_per_task < 1) fail("tasks and components_per_task must be >= 1");
      if (components_per_task > rank) fail("components_per_task may not exceed rank");
      if (!(shared_strength >= 0.0) || !std::isfinite(shared_strength)) fail("shared_strength must be >= 0");
      if (shared_strength > 0.0 && components_per_task + 1 > rank)
        fail("components_per_task + 1 may not exceed rank with a shared component");
      if (queries < 1 || queries >= n_checkpoints) fail("need 1 <= queries < n_checkpoints");
      break;
    case LabelSchema::kUnlabeled:
      if (label_dim > rank) fail("label_dim may not exceed rank");
      break;
  }
  if (table_components() > std::min(d_out, d_in)) fail("too many planted components for d");
}

int GenSpec::planted_components() const {
  if (label_schema == LabelSchema::kTaskRetrieval) return tasks * components_per_task;
  return std::max(label_dim, 1);
}

int GenSpec::table_components() const {
  const bool shared = label_schema == LabelSchema::kTaskRetrieval && shared_strength > 0.0;
  return planted_components() + (shared ? 1 : 0);
}

std::vector<PlantedPosition> planted_directions(const GenSpec& spec) {
  const auto keys = position_keys(spec);
  const int c = spec.table_components();
  std::vector<PlantedPosition> out;
  for (std::size_t p = 0; p < keys.size(); ++p) {
    auto ru = stream(spec.seed, kSaltPlantedU, p);
    auto rv = stream(spec.seed, kSaltPlantedV, p);
    out.push_back({keys[p], gaussian_orthonormal(spec.d_out, c, ru),
                   gaussian_orthonormal(spec.d_in, c, rv)});
  }
  return out;
}

double ladder_amplitude(const GenSpec& spec, int c) {
  const int n = spec.planted_components();
  if (n <= 1) return spec.signal_strength;
  return spec.signal_strength * (1.0 + 0.5 * static_cast<double>(n - 1 - c) / static_cast<double>(n - 1));
}

std::vector<double> regression_weights(const GenSpec& spec) {
  auto rng = stream(spec.seed, kSaltWeights, 0);
  std::uniform_real_distribution<double> mag(0.5, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> w;
  for (int a = 0; a < spec.label_dim; ++a) {
    const double m = mag(rng);
    w.push_back(sign(rng) ? m : -m);
  }
  return w;
}

Generated generate_in_memory(const GenSpec& spec) {
  spec.validate();
  const auto planted = planted_directions(spec);
  const Eigen::Index r = spec.rank;
  const int n = spec.n_checkpoints;

  Generated gen;
  auto& man = gen.manifest;
  man.label_schema = spec.label_schema;
  man.label_dim = spec.label_schema == LabelSchema::kMultilabel ? spec.label_dim
                  : spec.label_schema == LabelSchema::kRegression ? 1
                                                                  : 0;
  man.rank = spec.rank;
  man.layer_count = spec.layer_count;
  man.generator_seed = spec.seed;

  const std::vector<double> weights = spec.label_schema == LabelSchema::kRegression
                                          ? regression_weights(spec)
                                          : std::vector<double>{};
  if (spec.label_schema == LabelSchema::kRegression) {
    const double p = spec.attribute_prior;
    const double j2 = spec.amplitude_jitter * spec.amplitude_jitter / 3.0;
    double mean = 0.0, var = 0.0;
    for (int a = 0; a < spec.label_dim; ++a) {
      const double c = ladder_amplitude(spec, a);
      mean += weights[a] * c * p;
      var += weights[a] * weights[a] * c * c * (p * (1.0 + j2) - p * p);
    }
    gen.mu = mean;
    gen.kappa = var > 0.0 ? 1.5 / std::sqrt(var) : 1.0;
  }

  std::vector<interchange::Split> splits;
  if (spec.label_schema == LabelSchema::kTaskRetrieval) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    auto rng = stream(spec.seed, kSaltSplit, 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    splits.assign(static_cast<std::size_t>(n), interchange::Split::kGallery);
    for (int i = 0; i < spec.queries; ++i) splits[static_cast<std::size_t>(perm[i])] = interchange::Split::kQuery;
  } else {
    splits = interchange::assign_supervised_splits(static_cast<std::size_t>(n), spec.seed);
  }

  for (int i = 0; i < n; ++i) {
    auto rng = stream(spec.seed, kSaltCheckpoint, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::normal_distribution<double> normal;

    std::vector<int> active;
    std::vector<double> amp(static_cast<std::size_t>(spec.planted_components()), 0.0);
    interchange::Label label;
    if (spec.label_schema == LabelSchema::kTaskRetrieval) {
      const int task = i % spec.tasks;
      for (int j = 0; j < spec.components_per_task; ++j) active.push_back(task * spec.components_per_task + j);
      label = "task" + std::to_string(task);
    } else {
      std::bernoulli_distribution bit(spec.attribute_prior);
      std::vector<std::uint8_t> bits(static_cast<std::size_t>(spec.label_dim));
      for (int a = 0; a < spec.label_dim; ++a) {
        bits[a] = bit(rng) ? 1 : 0;
        if (bits[a]) active.push_back(a);
      }
      if (spec.label_schema == LabelSchema::kMultilabel) label = bits;
    }
    const bool jitter = spec.label_schema != LabelSchema::kMultilabel;
    for (int c : active)
      amp[c] = ladder_amplitude(spec, c) * (jitter ? 1.0 + spec.amplitude_jitter * unif(rng) : 1.0);

    const double shared_amp = spec.table_components() > spec.planted_components()
                                  ? spec.shared_strength * (1.0 + spec.amplitude_jitter * unif(rng))
                                  : 0.0;

    if (spec.label_schema == LabelSchema::kRegression) {
      double s = 0.0;
      for (int c : active) s += weights[c] * amp[c];
      const double clean = logistic(gen.kappa * (s - gen.mu));
      const double noisy = std::clamp(clean + spec.target_noise * normal(rng), 0.0, 1.0);
      gen.noiseless_targets.push_back(clean);
      label = noisy;
    }

    interchange::LoraCheckpoint ckpt;
    ckpt.id = checkpoint_id(i);
    ckpt.label = label;
    for (const auto& pp : planted) {
      MatrixD bf(spec.d_out, r), af(r, spec.d_in);
      Eigen::Index slot = 0;
      for (int c : active) {
        bf.col(slot) = amp[c] * pp.u.col(c);
        af.row(slot) = pp.v.col(c).transpose();
        ++slot;
      }
      if (shared_amp > 0.0) {
        const int c = spec.planted_components();
        bf.col(slot) = shared_amp * pp.u.col(c);
        af.row(slot) = pp.v.col(c).transpose();
        ++slot;
      }
      for (Eigen::Index j = 0; slot < r; ++slot, ++j) {
        const double level = spec.noise_std * (1.0 - 0.5 * static_cast<double>(j) / static_cast<double>(r));
        bf.col(slot) = level * unit_vector(spec.d_out, rng);
        af.row(slot) = unit_vector(spec.d_in, rng).transpose();
      }
      const auto exact = canon::canonize(interchange::BasicFactorPair<double>{bf, af});
      const VectorD root = exact.sigma.cwiseSqrt();

      MatrixD g = canon::sample_gl(r, spec.gl_alpha, rng).g;
      MatrixD g_inv = MatrixD::Identity(r, r);
      if (spec.gl_alpha > 0.0) {
        std::vector<Eigen::Index> perm(static_cast<std::size_t>(r));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::bernoulli_distribution flip(0.5);
        MatrixD ps = MatrixD::Zero(r, r);
        for (Eigen::Index k = 0; k < r; ++k) ps(perm[static_cast<std::size_t>(k)], k) = flip(rng) ? -1.0 : 1.0;
        g = g * ps;
        g_inv = Eigen::FullPivLU<Eigen::MatrixXd>(g).inverse();
      }
      interchange::Position pos;
      pos.key = pp.key;
      pos.factors.b = (exact.u * root.asDiagonal() * g).cast<float>();
      pos.factors.a = (g_inv * root.asDiagonal() * exact.v.transpose()).cast<float>();
      ckpt.positions.push_back(std::move(pos));
    }
    man.checkpoints.push_back({ckpt.id, "checkpoints/" + ckpt.id + ".lwc", splits[static_cast<std::size_t>(i)], label});
    gen.active.push_back(active);
    gen.checkpoints.push_back(std::move(ckpt));
  }
  return gen;
}

std::string spec_to_json(const GenSpec& spec) {
  json j;
  j["n_checkpoints"] = spec.n_checkpoints;
  j["layer_count"] = spec.layer_count;
  json mods = json::array();
  for (auto m : spec.modules) mods.push_back(interchange::module_name(m));
  j["modules"] = mods;
  j["d_out"] = spec.d_out;
  j["d_in"] = spec.d_in;
  j["rank"] = spec.rank;
  j["label_schema"] = interchange::to_string(spec.label_schema);
  j["label_dim"] = spec.label_dim;
  j["signal_strength"] = spec.signal_strength;
  j["noise_std"] = spec.noise_std;
  j["gl_alpha"] = spec.gl_alpha;
  j["seed"] = spec.seed;
  j["attribute_prior"] = spec.attribute_prior;
  j["amplitude_jitter"] = spec.amplitude_jitter;
  j["target_noise"] = spec.target_noise;
  j["tasks"] = spec.tasks;
  j["components_per_task"] = spec.components_per_task;
  j["queries"] = spec.queries;
  j["shared_strength"] = spec.shared_strength;
  return j.dump(2);
}

GenSpec spec_from_json(const std::string& text) {
  GenSpec s;
  try {
    const json j = json::parse(text);
    s.n_checkpoints = j.value("n_checkpoints", s.n_checkpoints);
    s.layer_count = j.value("layer_count", s.layer_count);
    if (j.contains("modules")) {
      s.modules.clear();
      for (const auto& m : j["modules"]) s.modules.push_back(interchange::parse_module(m.get<std::string>()));
    }
    s.d_out = j.value("d_out", s.d_out);
    s.d_in = j.value("d_in", s.d_in);
    s.rank = j.value("rank", s.rank);
    if (j.contains("label_schema"))
      s.label_schema = interchange::parse_label_schema(j["label_schema"].get<std::string>());
    s.label_dim = j.value("label_dim", s.label_dim);
    s.signal_strength = j.value("signal_strength", s.signal_strength);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.gl_alpha = j.value("gl_alpha", s.gl_alpha);
    s.seed = j.value("seed", s.seed);
    s.attribute_prior = j.value("attribute_prior", s.attribute_prior);
    s.amplitude_jitter = j.value("amplitude_jitter", s.amplitude_jitter);
    s.target_noise = j.value("target_noise", s.target_noise);
    s.tasks = j.value("tasks", s.tasks);
    s.components_per_task = j.value("components_per_task", s.components_per_task);
    s.queries = j.value("queries", s.queries);
    s.shared_strength = j.value("shared_strength", s.shared_strength);
  } catch (const json::exception& e) {
    throw Error(Errc::kInvalidSpec, std::string("bad generator spec: ") + e.what());
  }
  return s;
}

interchange::CollectionManifest generate(const GenSpec& spec, const std::filesystem::path& dir) {
  const Generated gen = generate_in_memory(spec);
  std::filesystem::create_directories(dir / "checkpoints");
  for (const auto& ckpt : gen.checkpoints)
    interchange::write_checkpoint(ckpt, dir / "checkpoints" / (ckpt.id + ".lwc"));
  interchange::write_manifest(gen.manifest, dir / "manifest.json");

  json truth;
  truth["generator"] = "w2t-synthgen";
  truth["version"] = std::string(kVersion);
  truth["spec"] = json::parse(spec_to_json(spec));
  truth["planted_direction_seed"] = spec.seed;
  truth["planted_components"] = spec.planted_components();
  truth["table_components"] = spec.table_components();
  json amps = json::array();
  for (int c = 0; c < spec.planted_components(); ++c) amps.push_back(ladder_amplitude(spec, c));
  truth["ladder_amplitudes"] = amps;
  truth["noise_slot_amplitude"] = "noise_std * (1 - 0.5 j / rank)";
  truth["factorization"] = "B = U diag(sqrt s) G P, A = (G P)^-1 diag(sqrt s) V^T; P random signed permutation when gl_alpha > 0";
  json ids = json::array();
  json active = json::array();
  for (std::size_t i = 0; i < gen.checkpoints.size(); ++i) {
    ids.push_back(gen.checkpoints[i].id);
    active.push_back(gen.active[i]);
  }
  truth["ids"] = ids;
  truth["active_components"] = active;
  if (spec.label_schema == LabelSchema::kRegression) {
    truth["regression"] = {{"weights", regression_weights(spec)},
                           {"kappa", gen.kappa},
                           {"mu", gen.mu},
                           {"target", "sigmoid(kappa * (sum_a w_a y_a amp_a - mu))"}};
    truth["noiseless_targets"] = gen.noiseless_targets;
  }
  std::ofstream out(dir / "truth.json", std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write truth.json");
  out << truth.dump(2) << "\n";
  return gen.manifest;
}

Truth read_truth(const std::filesystem::path& collection) {
  const auto dir = std::filesystem::is_directory(collection) ? collection : collection.parent_path();
  std::ifstream in(dir / "truth.json");
  if (!in) throw Error(Errc::kIo, "missing " + (dir / "truth.json").string());
  std::stringstream ss;
  ss << in.rdbuf();
  Truth t;
  try {
    const json j = json::parse(ss.str());
    t.spec = spec_from_json(j.at("spec").dump());
    t.ids = j.at("ids").get<std::vector<std::string>>();
    if (j.contains("noiseless_targets")) t.noiseless_targets = j["noiseless_targets"].get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(Errc::kInvalidSpec, std::string("bad truth.json: ") + e.what());
  }
  return t;
}

}  // namespace w2t::synthgen
