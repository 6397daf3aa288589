// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>

#include "test_util.hpp"
#include "w2t/error.hpp"
#include "w2t/studies.hpp"
#include "w2t/synthgen.hpp"

namespace w2t::evalx {
namespace {

using encoder::Encoder;
using encoder::Mode;
using interchange::LabelSchema;
using json = nlohmann::json;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::kIo;
}

synthgen::GenSpec small_spec(LabelSchema schema) {
  synthgen::GenSpec s;
  s.n_checkpoints = 50;
  s.layer_count = 2;
  s.d_out = 12;
  s.d_in = 10;
  s.rank = 3;
  s.label_dim = 3;
  s.label_schema = schema;
  s.queries = 10;
  s.tasks = 3;
  s.components_per_task = 1;
  return s;
}

encoder::EncoderConfig tiny(const interchange::Collection& coll, Mode mode) {
  auto c = encoder::config_for(coll, mode);
  c.d_model = 16;
  c.heads = 2;
  c.head_width = 8;
  return c;
}

class StudiesTest : public ::testing::Test {
 protected:
  interchange::Collection make(LabelSchema schema) {
    synthgen::generate(small_spec(schema), dir_.path());
    return interchange::load_collection(dir_.path());
  }
  testing::TempDir dir_{"studies"};
};

TEST(Hash, Fnv1aReferenceVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Report, JsonAndCsv) {
  EvalReport r;
  r.kind = "regression";
  r.metrics["pearson"] = 0.5;
  r.metrics["mae"] = 0.25;
  r.meta["config_hash"] = "00ff";
  const auto j = json::parse(r.to_json());
  EXPECT_EQ(j["kind"], "regression");
  EXPECT_EQ(j["metrics"]["pearson"], 0.5);
  EXPECT_EQ(j["meta"]["config_hash"], "00ff");
  EXPECT_EQ(r.to_csv(), "metric,value\nmae,0.25\npearson,0.5\n");
  r.rows.push_back({{"a", "1"}, {"b", "x"}});
  r.rows.push_back({{"a", "2"}, {"b", "y"}});
  EXPECT_EQ(r.to_csv(), "a,b\n1,x\n2,y\n");
}

TEST_F(StudiesTest, InvarianceIdentityAndFullMode) {
  const auto coll = make(LabelSchema::kMultilabel);
  const Encoder model(tiny(coll, Mode::kFull), 3);
  InvarianceOptions o;
  o.alphas = {0.0, 1.0};
  o.transforms_per_alpha = 5;
  o.max_checkpoints = 4;
  const auto pts = invariance_study(model, coll, o);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].mean_drift, 0.0);
  EXPECT_EQ(pts[0].max_drift, 0.0);
  EXPECT_EQ(pts[0].agreement, 1.0);
  EXPECT_EQ(pts[0].checkpoints, 4);
  EXPECT_EQ(pts[1].transforms, 5);
  EXPECT_LE(pts[1].mean_drift, 1e-3);
  EXPECT_GE(pts[1].drift_ci, 0.0);
  const auto rep = invariance_report(pts);
  EXPECT_EQ(rep.kind, "invariance");
  EXPECT_EQ(rep.rows.size(), 2u);
  // same options, same numbers
  const auto again = invariance_study(model, coll, o);
  EXPECT_EQ(invariance_report(again).to_json(), rep.to_json());
}

TEST_F(StudiesTest, NoCanonDriftGrowsWithAlpha) {
  const auto coll = make(LabelSchema::kMultilabel);
  const Encoder model(tiny(coll, Mode::kNoCanon), 4);
  InvarianceOptions o;
  o.alphas = {0.01, 0.1, 0.5, 1.0};
  o.transforms_per_alpha = 30;
  o.max_checkpoints = 3;
  const auto pts = invariance_study(model, coll, o);
  for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_GE(pts[i].mean_drift, pts[i - 1].mean_drift);
  EXPECT_GE(pts.back().mean_drift, 0.1);
}

TEST_F(StudiesTest, EvaluateClassification) {
  const auto coll = make(LabelSchema::kMultilabel);
  const Encoder model(tiny(coll, Mode::kFull), 5);
  const auto rep = evaluate(model, coll);
  EXPECT_EQ(rep.kind, "classification");
  for (const char* k : {"macro_f1", "micro_f1", "mauroc"}) {
    ASSERT_TRUE(rep.metrics.count(k)) << k;
    EXPECT_GE(rep.metrics.at(k), 0.0);
    EXPECT_LE(rep.metrics.at(k), 1.0);
  }
}

TEST_F(StudiesTest, EvaluateRegressionHasNoiselessMetrics) {
  const auto coll = make(LabelSchema::kRegression);
  const Encoder model(tiny(coll, Mode::kFull), 6);
  const auto rep = evaluate(model, coll);
  EXPECT_EQ(rep.kind, "regression");
  for (const char* k : {"mae", "rmse", "pearson", "spearman", "pearson_noiseless", "mae_noiseless"})
    EXPECT_TRUE(rep.metrics.count(k)) << k;
}

TEST_F(StudiesTest, AblationSingleModeAndUnlabeled) {
  auto coll = make(LabelSchema::kMultilabel);
  encoder::TrainOptions o;
  o.epochs = 1;
  o.warmup = 1;
  o.batch = 16;
  const auto rows = ablation_study(coll, tiny(coll, Mode::kFull), o, {Mode::kNoRankLevel});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].mode, Mode::kNoRankLevel);
  const auto rep = ablation_report(rows);
  EXPECT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0].at("mode"), "no_rank_level");

  auto m = coll.manifest();
  m.label_schema = LabelSchema::kUnlabeled;
  m.label_dim = 0;
  for (auto& e : m.checkpoints) e.label = std::monostate{};
  interchange::write_manifest(m, dir_ / "manifest.json");
  const auto unl = interchange::load_collection(dir_.path());
  EXPECT_EQ(code_of([&] { ablation_study(unl, tiny(coll, Mode::kFull), o, {Mode::kFull}); }),
            Errc::kUnlabeledCollection);
}

TEST_F(StudiesTest, RetrievalReportKeys) {
  const auto pool = make(LabelSchema::kTaskRetrieval);
  const auto set = retrieval_set(pool);
  EXPECT_EQ(set.query_ids.size(), 10u);
  EXPECT_EQ(set.gallery_ids.size(), 40u);
  encoder::EncoderConfig cfg;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.head_width = 8;
  cfg.rank = 3;
  cfg.layer_count = 2;
  cfg.d_out = 12;
  cfg.d_in = 10;
  cfg.output_dim = 1;
  cfg.task = encoder::TaskKind::kRegression;
  const Encoder model(cfg, 7);
  const auto enc = encoder_retrieval(model, pool, 5);
  const auto raw = raw_cos_retrieval(pool, 5);
  const auto rep = retrieval_report(enc, &raw);
  EXPECT_EQ(rep.kind, "retrieval");
  for (const char* k : {"ndcg@5", "hit@1", "mrr", "rawcos.ndcg@5", "rawcos.hit@1", "rawcos.mrr"})
    EXPECT_TRUE(rep.metrics.count(k)) << k;
  EXPECT_EQ(rep.rows.size(), 6u);
}

TEST_F(StudiesTest, RetrievalNeedsTaskSchema) {
  const auto coll = make(LabelSchema::kMultilabel);
  EXPECT_EQ(code_of([&] { retrieval_set(coll); }), Errc::kLabelSchemaMismatch);
}

}  // namespace
}  // namespace w2t::evalx
