// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>

#include "test_util.hpp"
#include "w2t/canon.hpp"
#include "w2t/encoder.hpp"
#include "w2t/error.hpp"
#include "w2t/synthgen.hpp"

namespace w2t::encoder {
namespace {

using interchange::LoraCheckpoint;
using nn::Mat;
using nn::Tensor;
using testing::check_gradients;
using testing::random_checkpoint;
using testing::random_mat;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::kIo;
}

EncoderConfig small_config(Mode mode = Mode::kFull) {
  EncoderConfig c;
  c.d_model = 16;
  c.heads = 2;
  c.head_width = 8;
  c.sigma_hidden = 4;
  c.rank = 3;
  c.layer_count = 2;
  c.module_vocab = 4;
  c.d_out = 10;
  c.d_in = 7;
  c.output_dim = 3;
  c.mode = mode;
  return c;
}

LoraCheckpoint small_ckpt(const std::string& id, std::mt19937_64& rng) {
  return random_checkpoint(id, 2, {0, 2}, 10, 7, 3, rng);
}

void randomize(nn::ParamStore& store, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  for (auto& g : store.groups())
    for (auto& t : g.tensors) t.tensor.mutable_value() = random_mat(t.tensor.rows(), t.tensor.cols(), rng, scale);
}

double rel_drift(const VectorD& a, const VectorD& b) { return (a - b).norm() / a.norm(); }

LoraCheckpoint gl_moved(const LoraCheckpoint& c, double alpha, std::mt19937_64& rng) {
  LoraCheckpoint out = c;
  for (auto& p : out.positions) p.factors = canon::apply_gl(p.factors, canon::sample_gl(p.factors.rank(), alpha, rng));
  return out;
}

TEST(Config, ValidateAndJsonRoundTrip) {
  auto c = small_config(Mode::kNoPosLevel);
  c.task = TaskKind::kRegression;
  c.output_dim = 1;
  const auto back = EncoderConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.mode, Mode::kNoPosLevel);
  c.heads = 3;
  EXPECT_EQ(code_of([&] { c.validate(); }), Errc::kConfigMismatch);
  EXPECT_EQ(parse_mode("no_canon"), Mode::kNoCanon);
  EXPECT_EQ(to_string(Mode::kNoRankLevel), "no_rank_level");
}

TEST(Tokenize, ZeroModulationIsIdentity) {
  Encoder enc(small_config(), 1);
  std::mt19937_64 rng(2);
  const Tensor u = Tensor::constant(random_mat(3, 10, rng));
  const Tensor v = Tensor::constant(random_mat(3, 7, rng));
  const Tensor tau = enc.tokenize(u, v, Tensor::constant(Mat::Zero(3, 1)));
  const Tensor tau2 = enc.tokenize(u, v, Tensor::constant(Mat::Constant(3, 1, 4.0)));
  // z computed independently from the projector parameters
  const auto& p = enc.params();
  const Mat pu = (u.value() * p.get("projector/phi_u_w").value()).rowwise() +
                 p.get("projector/phi_u_b").value().row(0);
  const Mat pv = (v.value() * p.get("projector/phi_v_w").value()).rowwise() +
                 p.get("projector/phi_v_b").value().row(0);
  Mat cat(3, 32);
  cat << pu, pv;
  const Mat z = (cat * p.get("projector/fuse_w").value()).rowwise() + p.get("projector/fuse_b").value().row(0);
  EXPECT_LE((tau.value() - z).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(tau.value(), tau2.value());
}

TEST(Tokenize, SigmaOnlyScalesAndShifts) {
  Encoder enc(small_config(), 1);
  randomize(enc.params(), 3);
  std::mt19937_64 rng(4);
  const Tensor u = Tensor::constant(random_mat(1, 10, rng));
  const Tensor v = Tensor::constant(random_mat(1, 7, rng));
  const Mat t1 = enc.tokenize(u, v, Tensor::constant(Mat::Constant(1, 1, 0.5))).value();
  const Mat t2 = enc.tokenize(u, v, Tensor::constant(Mat::Constant(1, 1, 3.0))).value();
  EXPECT_GT((t1 - t2).norm(), 1e-6);
  // with the shift half of the sigma head zeroed, tau is z scaled per channel by 1 + tanh(gamma)
  auto& p = enc.params();
  p.get("modulation/sigma_b2").mutable_value().setZero();
  p.get("modulation/sigma_w2").mutable_value().rightCols(16).setZero();
  const Mat z = enc.tokenize(u, v, Tensor::constant(Mat::Zero(1, 1))).value();
  const Mat s = enc.tokenize(u, v, Tensor::constant(Mat::Constant(1, 1, 3.0))).value();
  for (int j = 0; j < 16; ++j) {
    const double factor = s(0, j) / z(0, j);
    EXPECT_GE(factor, 0.0);
    EXPECT_LE(factor, 2.0);
  }
}

TEST(Tokenize, GradientsWrtInputs) {
  Encoder enc(small_config(), 5);
  randomize(enc.params(), 6);
  std::mt19937_64 rng(7);
  Tensor u(random_mat(4, 10, rng), true), v(random_mat(4, 7, rng), true);
  Tensor s(random_mat(4, 1, rng).cwiseAbs(), true);
  const Tensor w = Tensor::constant(random_mat(4, 16, rng));
  const auto res = check_gradients([&] { return nn::sum(nn::mul(enc.tokenize(u, v, s), w)); }, {u, v, s}, 30, 8);
  EXPECT_LE(res.max_rel_error, 1e-3);
}

TEST(Tokenize, ShapeMismatch) {
  Encoder enc(small_config(), 1);
  EXPECT_EQ(code_of([&] {
              enc.tokenize(Tensor::constant(Mat::Zero(2, 9)), Tensor::constant(Mat::Zero(2, 7)),
                           Tensor::constant(Mat::Zero(2, 1)));
            }),
            Errc::kShapeMismatch);
}

TEST(RankPool, Weights) {
  VectorD s(6);
  s << 2, 2, 2, 1, 0, 0;
  const nn::Offsets segs{0, 3, 6};
  const VectorD w = rank_pool_weights(s, segs);
  for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(w(k), 1.0 / 3.0);
  EXPECT_EQ(w(3), 1.0);
  EXPECT_EQ(w(4), 0.0);
  EXPECT_EQ(w(5), 0.0);
  const VectorD z = rank_pool_weights(VectorD::Zero(3), {0, 3});
  for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(z(k), 1.0 / 3.0);
}

TEST(RankPool, Cases) {
  std::mt19937_64 rng(9);
  const Mat tokens = random_mat(3, 5, rng);
  const Tensor t = Tensor::constant(tokens);
  VectorD eq = VectorD::Constant(3, 0.7);
  const Mat mean_tok = tokens.colwise().mean();
  EXPECT_LE((rank_pool(t, eq, {0, 3}).value() - mean_tok).cwiseAbs().maxCoeff(), 1e-15);
  VectorD first(3);
  first << 1, 0, 0;
  EXPECT_EQ(rank_pool(t, first, {0, 3}).value(), tokens.row(0));
  EXPECT_LE((rank_pool(t, VectorD::Zero(3), {0, 3}).value() - mean_tok).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AttentionPool, SinglePositionIsIdentity) {
  std::mt19937_64 rng(10);
  const Mat g = random_mat(1, 8, rng);
  const Tensor q = Tensor::constant(random_mat(8, 1, rng));
  EXPECT_EQ(attention_pool(Tensor::constant(g), q, {0, 1}).value(), g);
}

TEST(AttentionPool, MatchesSoftmaxOracle) {
  std::mt19937_64 rng(11);
  const Mat g = random_mat(5, 4, rng);
  const Mat q = random_mat(4, 1, rng);
  const Mat out = attention_pool(Tensor::constant(g), Tensor::constant(q), {0, 2, 5}).value();
  for (auto [b, e, row] : {std::tuple{0, 2, 0}, std::tuple{2, 5, 1}}) {
    Eigen::VectorXd sc(e - b);
    for (int i = b; i < e; ++i) sc(i - b) = g.row(i).dot(q.col(0)) / 2.0;
    sc = (sc.array() - sc.maxCoeff()).exp();
    sc /= sc.sum();
    Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(4);
    for (int i = b; i < e; ++i) expect += sc(i - b) * g.row(i);
    EXPECT_LE((out.row(row) - expect).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Encode, SinglePositionRankOneIdentityBlocks) {
  auto c = small_config();
  c.rank = 1;
  c.layer_count = 1;
  Encoder enc(c, 12);
  enc.make_blocks_identity();
  std::mt19937_64 rng(13);
  const auto ckpt = random_checkpoint("x", 1, {2}, 10, 7, 1, rng);
  const auto prep = enc.prepare(ckpt);
  const Mat tau = enc.tokenize(Tensor::constant(prep.u_rows), Tensor::constant(prep.v_rows),
                               Tensor::constant(prep.sigma))
                      .value();
  const auto& p = enc.params();
  const Mat expected = tau + p.get("embeddings/e_layer").value().row(0) + p.get("embeddings/e_module").value().row(2);
  const VectorD h = enc.encode(ckpt);
  EXPECT_LE((h.transpose() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encode, PositionOrderInvariant) {
  Encoder enc(small_config(), 14);
  std::mt19937_64 rng(15);
  auto ckpt = small_ckpt("x", rng);
  const VectorD h = enc.encode(ckpt);
  std::reverse(ckpt.positions.begin(), ckpt.positions.end());
  EXPECT_EQ(enc.encode(ckpt), h);
}

TEST(Encode, ConfigMismatch) {
  Encoder enc(small_config(), 16);
  std::mt19937_64 rng(17);
  EXPECT_EQ(code_of([&] { enc.prepare(random_checkpoint("r", 2, {0}, 10, 7, 2, rng)); }), Errc::kConfigMismatch);
  EXPECT_EQ(code_of([&] { enc.prepare(random_checkpoint("d", 2, {0}, 11, 7, 3, rng)); }), Errc::kConfigMismatch);
  EXPECT_EQ(code_of([&] { enc.prepare(random_checkpoint("l", 3, {0}, 10, 7, 3, rng)); }), Errc::kConfigMismatch);
  EXPECT_EQ(code_of([&] { enc.prepare(random_checkpoint("m", 1, {5}, 10, 7, 3, rng)); }), Errc::kConfigMismatch);
}

class ModeGradient : public ::testing::TestWithParam<Mode> {};

TEST_P(ModeGradient, ComposedGraphMatchesFiniteDifferences) {
  auto c = small_config(GetParam());
  Encoder enc(c, 18);
  randomize(enc.params(), 19, 0.25);
  std::mt19937_64 rng(20);
  std::vector<PreparedCheckpoint> prep;
  for (int i = 0; i < 3; ++i) prep.push_back(enc.prepare(small_ckpt("c" + std::to_string(i), rng)));
  std::vector<const PreparedCheckpoint*> batch;
  for (const auto& p : prep) batch.push_back(&p);
  Mat labels(3, 3);
  labels << 1, 0, 1, 0, 0, 1, 1, 1, 0;
  std::vector<Tensor> leaves;
  for (const auto& g : enc.params().groups())
    for (const auto& t : g.tensors) leaves.push_back(t.tensor);
  const auto res =
      check_gradients([&] { return nn::bce_with_logits(enc.head(enc.embed(batch)), labels); }, leaves, 40, 21);
  EXPECT_EQ(res.probes, 40);
  EXPECT_LE(res.max_rel_error, 1e-3);
}

INSTANTIATE_TEST_SUITE_P(Modes, ModeGradient,
                         ::testing::Values(Mode::kFull, Mode::kNoCanon, Mode::kNoRankLevel, Mode::kNoPosLevel),
                         [](const auto& info) { return to_string(info.param); });

struct BlockCase {
  const char* group;
  const char* prefix;
};

TEST(BlockGradient, EachGroupSeparately) {
  Encoder enc(small_config(), 22);
  randomize(enc.params(), 23, 0.25);
  std::mt19937_64 rng(24);
  const auto prep = enc.prepare(small_ckpt("c", rng));
  const std::vector<const PreparedCheckpoint*> batch{&prep};
  Mat target(1, 3);
  target << 0.2, -0.4, 1.0;
  for (const auto& g : enc.params().groups()) {
    std::vector<Tensor> leaves;
    for (const auto& t : g.tensors) leaves.push_back(t.tensor);
    const auto res = check_gradients([&] { return nn::mse(enc.head(enc.embed(batch)), target); }, leaves, 20, 25);
    EXPECT_LE(res.max_rel_error, 1e-3) << g.name;
  }
}

TEST(Head, ZeroHeadGivesHalfProbabilities) {
  Encoder enc(small_config(), 26);
  for (const char* n : {"head/head_w1", "head/head_b1", "head/head_w2", "head/head_b2"})
    enc.params().get(n).mutable_value().setZero();
  std::mt19937_64 rng(27);
  const auto prep = enc.prepare(small_ckpt("c", rng));
  const MatrixD logits = enc.predict_all({prep});
  ASSERT_EQ(logits.cols(), 3);
  EXPECT_EQ(logits.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(nn::sigmoid(Tensor::constant(logits)).value()(0, 0), 0.5);
}

TEST(Head, OutputWidthFollowsConfig) {
  auto c = small_config();
  c.output_dim = 8;
  Encoder enc(c, 28);
  std::mt19937_64 rng(29);
  EXPECT_EQ(enc.predict_all({enc.prepare(small_ckpt("c", rng))}).cols(), 8);
}

TEST(Invariance, FullModeDriftBelowThreshold) {
  Encoder enc(small_config(), 30);
  randomize(enc.params(), 31, 0.3);
  std::mt19937_64 rng(32);
  for (double alpha : {0.01, 0.1, 0.5, 1.0}) {
    for (int t = 0; t < 10; ++t) {
      const auto ckpt = small_ckpt("c", rng);
      const VectorD h = enc.encode(ckpt);
      EXPECT_LE(rel_drift(h, enc.encode(gl_moved(ckpt, alpha, rng))), 1e-3) << alpha;
    }
  }
}

TEST(Invariance, NoCanonDriftLarge) {
  Encoder enc(small_config(Mode::kNoCanon), 33);
  std::mt19937_64 rng(34);
  double total = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto ckpt = small_ckpt("c", rng);
    total += rel_drift(enc.encode(ckpt), enc.encode(gl_moved(ckpt, 1.0, rng)));
  }
  EXPECT_GE(total / 20.0, 0.1);
}

TEST(SaveLoad, RoundTrip) {
  testing::TempDir dir("enc");
  Encoder enc(small_config(Mode::kNoRankLevel), 35);
  randomize(enc.params(), 36);
  enc.save(dir.path(), 7);
  const Encoder back = Encoder::load(dir.path());
  EXPECT_EQ(back.config().to_json(), enc.config().to_json());
  EXPECT_EQ(back.seed(), 35u);
  std::mt19937_64 rng(37);
  const auto ckpt = small_ckpt("c", rng);
  EXPECT_LE(rel_drift(enc.encode(ckpt), back.encode(ckpt)), 1e-5);
  testing::TempDir dir2("enc2");
  back.save(dir2.path(), 7);
  EXPECT_EQ(Encoder::load(dir2.path()).encode(ckpt), back.encode(ckpt));
}

TEST(RawCos, Trivial) {
  std::mt19937_64 rng(38);
  const auto a = small_ckpt("a", rng);
  EXPECT_NEAR(raw_cos_similarity(a, a), 1.0, 1e-12);
  auto neg = a;
  for (auto& p : neg.positions) {
    p.factors.b = -p.factors.b;
    p.factors.a = -p.factors.a;
  }
  EXPECT_NEAR(raw_cos_similarity(a, neg), -1.0, 1e-12);
  EXPECT_LT(raw_cos_similarity(a, gl_moved(a, 1.0, rng)), 0.999);
  auto shuffled = a;
  std::reverse(shuffled.positions.begin(), shuffled.positions.end());
  EXPECT_NEAR(raw_cos_similarity(a, shuffled), 1.0, 1e-12);
}

TEST(RawCos, FlattenOrder) {
  std::mt19937_64 rng(39);
  const auto a = small_ckpt("a", rng);
  const VectorD f = flatten_raw(a);
  EXPECT_EQ(f.size(), 4 * (10 * 3 + 3 * 7));
  EXPECT_EQ(f(0), a.positions[0].factors.b(0, 0));
  EXPECT_EQ(f(1), a.positions[0].factors.b(0, 1));
  EXPECT_EQ(f(30), a.positions[0].factors.a(0, 0));
}

TEST(RawCos, LayoutMismatch) {
  std::mt19937_64 rng(40);
  const auto a = small_ckpt("a", rng);
  const auto b = random_checkpoint("b", 1, {0, 2}, 10, 7, 3, rng);
  EXPECT_EQ(code_of([&] { raw_cos_similarity(a, b); }), Errc::kLayoutMismatch);
}

class TrainFixture : public ::testing::Test {
 protected:
  static synthgen::GenSpec spec(interchange::LabelSchema schema) {
    synthgen::GenSpec s;
    s.n_checkpoints = 60;
    s.layer_count = 2;
    s.d_out = 10;
    s.d_in = 7;
    s.rank = 3;
    s.label_dim = 3;
    s.label_schema = schema;
    return s;
  }
  testing::TempDir dir_{"train"};
};

TEST_F(TrainFixture, ZeroEpochsReturnsInitialModel) {
  synthgen::generate(spec(interchange::LabelSchema::kMultilabel), dir_.path());
  const auto coll = interchange::load_collection(dir_.path());
  auto cfg = config_for(coll, Mode::kFull);
  cfg.d_model = 16;
  cfg.heads = 2;
  TrainOptions o;
  o.epochs = 0;
  o.seed = 41;
  const auto res = train(coll, cfg, o);
  EXPECT_TRUE(res.log.empty());
  Encoder fresh(cfg, 41);
  std::mt19937_64 rng(42);
  const auto ckpt = coll.load(coll.ids().front());
  EXPECT_EQ(res.encoder.encode(ckpt), fresh.encode(ckpt));
}

TEST_F(TrainFixture, SchemaMismatchAndEmptySplit) {
  synthgen::generate(spec(interchange::LabelSchema::kMultilabel), dir_.path());
  const auto coll = interchange::load_collection(dir_.path());
  TrainOptions o;
  o.epochs = 1;
  o.expect_schema = interchange::LabelSchema::kRegression;
  EXPECT_EQ(code_of([&] { train(coll, config_for(coll, Mode::kFull), o); }), Errc::kLabelSchemaMismatch);

  auto man = coll.manifest();
  for (auto& e : man.checkpoints)
    if (e.split == interchange::Split::kVal) e.split = interchange::Split::kTrain;
  interchange::write_manifest(man, dir_ / "manifest.json");
  const auto no_val = interchange::load_collection(dir_.path());
  EXPECT_EQ(code_of([&] { train(no_val, config_for(no_val, Mode::kFull), TrainOptions{.epochs = 1, .expect_schema = {}, .on_epoch = {}}); }),
            Errc::kEmptySplit);
}

TEST_F(TrainFixture, WarmupFreezesOtherGroups) {
  synthgen::generate(spec(interchange::LabelSchema::kMultilabel), dir_.path());
  const auto coll = interchange::load_collection(dir_.path());
  auto cfg = config_for(coll, Mode::kFull);
  cfg.d_model = 16;
  cfg.heads = 2;
  TrainOptions o;
  o.epochs = 2;
  o.warmup = 2;
  o.seed = 43;
  o.batch = 8;
  const auto res = train(coll, cfg, o);
  ASSERT_EQ(res.log.size(), 2u);
  EXPECT_EQ(res.log[0].stage, "warmup");
  const Encoder fresh(cfg, 43);
  const auto& warm = Encoder::warmup_groups();
  bool moved = false;
  for (const auto& g : fresh.params().groups()) {
    const bool is_warm = std::find(warm.begin(), warm.end(), g.name) != warm.end();
    for (const auto& t : g.tensors) {
      const Mat& now = res.encoder.params().get(g.name + "/" + t.name).value();
      if (is_warm) {
        moved = moved || now != t.tensor.value();
      } else {
        EXPECT_EQ(now, t.tensor.value()) << g.name << "/" << t.name;
      }
    }
  }
  EXPECT_TRUE(moved);
}

TEST_F(TrainFixture, ConstantTargetRegressionFitsBelowNoiseFloor) {
  auto s = spec(interchange::LabelSchema::kRegression);
  synthgen::generate(s, dir_.path());
  auto man = interchange::load_collection(dir_.path()).manifest();
  for (auto& e : man.checkpoints) e.label = 0.3;
  interchange::write_manifest(man, dir_ / "manifest.json");
  const auto coll = interchange::load_collection(dir_.path());
  auto cfg = config_for(coll, Mode::kFull);
  cfg.d_model = 16;
  cfg.heads = 2;
  TrainOptions o;
  o.epochs = 40;
  o.warmup = 2;
  o.batch = 4;
  o.base_lr = 1e-2;
  o.seed = 44;
  const auto res = train(coll, cfg, o);
  const auto ids = coll.ids(interchange::Split::kTest);
  const MatrixD pred = res.encoder.predict_all(prepare_all(res.encoder, coll, ids));
  const double mae = (pred.array() - 0.3).abs().mean();
  EXPECT_LT(mae, s.target_noise);
}

TEST_F(TrainFixture, DeterministicAcrossRuns) {
  synthgen::generate(spec(interchange::LabelSchema::kMultilabel), dir_.path());
  const auto coll = interchange::load_collection(dir_.path());
  auto cfg = config_for(coll, Mode::kFull);
  cfg.d_model = 16;
  cfg.heads = 2;
  TrainOptions o;
  o.epochs = 3;
  o.warmup = 1;
  o.batch = 8;
  const auto a = train(coll, cfg, o);
  const auto b = train(coll, cfg, o);
  EXPECT_EQ(train_log_json(a.log), train_log_json(b.log));
  for (const auto& g : a.encoder.params().groups())
    for (const auto& t : g.tensors)
      EXPECT_EQ(t.tensor.value(), b.encoder.params().get(g.name + "/" + t.name).value());
}

}  // namespace
}  // namespace w2t::encoder
