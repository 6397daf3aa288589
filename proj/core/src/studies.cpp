// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/studies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "w2t/canon.hpp"
#include "w2t/error.hpp"
#include "w2t/synthgen.hpp"

namespace w2t::evalx {

using interchange::LabelSchema;
using interchange::Split;
using json = nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double ci_half_width(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(v.size()));
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string EvalReport::to_json() const {
  json j;
  j["kind"] = kind;
  j["metrics"] = metrics;
  j["meta"] = meta;
  if (!rows.empty()) j["rows"] = rows;
  return j.dump(2);
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  if (rows.empty()) {
    out << "metric,value\n";
    for (const auto& [k, v] : metrics) out << csv_escape(k) << "," << format_double(v) << "\n";
    return out.str();
  }
  std::vector<std::string> cols;
  for (const auto& row : rows)
    for (const auto& [k, v] : row)
      if (std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << csv_escape(cols[i]);
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const auto it = row.find(cols[i]);
      out << (i ? "," : "") << (it == row.end() ? "" : csv_escape(it->second));
    }
    out << "\n";
  }
  return out.str();
}

void EvalReport::write(const std::filesystem::path& json_path,
                       const std::filesystem::path& csv_path) const {
  auto dump = [](const std::filesystem::path& p, const std::string& text) {
    if (p.empty()) return;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc | std::ios::binary);
    if (!out) throw Error(Errc::kIo, "cannot write " + p.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
  };
  dump(json_path, to_json());
  dump(csv_path, to_csv());
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

// -- evaluation --------------------------------------------------------------

EvalReport evaluate(const encoder::Encoder& model, const interchange::Collection& collection,
                    Split split) {
  const auto& man = collection.manifest();
  if (man.label_schema != LabelSchema::kMultilabel && man.label_schema != LabelSchema::kRegression)
    throw Error(Errc::kUnlabeledCollection, "evaluation needs attribute or score labels");
  const auto ids = collection.ids(split);
  if (ids.empty()) throw Error(Errc::kEmptySplit, interchange::to_string(split) + " split is empty");
  const auto items = encoder::prepare_all(model, collection, ids);
  const MatrixD out = model.predict_all(items);
  const MatrixD y = encoder::label_matrix(collection, ids);

  EvalReport rep;
  rep.meta["split"] = interchange::to_string(split);
  rep.meta["mode"] = encoder::to_string(model.config().mode);
  rep.meta["checkpoints"] = std::to_string(ids.size());
  if (man.label_schema == LabelSchema::kMultilabel) {
    rep.kind = "classification";
    const auto m = classification_metrics(out, y);
    rep.metrics["macro_f1"] = m.macro_f1;
    rep.metrics["micro_f1"] = m.micro_f1;
    rep.metrics["mauroc"] = m.mauroc;
    rep.metrics["auroc_excluded_attributes"] = m.excluded_attributes;
    for (std::size_t a = 0; a < m.f1.size(); ++a) {
      rep.rows.push_back({{"attribute", std::to_string(a)},
                          {"f1", format_double(m.f1[a])},
                          {"auroc", std::isnan(m.auroc[a]) ? "" : format_double(m.auroc[a])}});
    }
    return rep;
  }
  rep.kind = "regression";
  const auto m = regression_metrics(out.col(0), y.col(0));
  rep.metrics["mae"] = m.mae;
  rep.metrics["rmse"] = m.rmse;
  rep.metrics["pearson"] = m.pearson;
  rep.metrics["spearman"] = m.spearman;
  const auto truth_path = collection.root() / "truth.json";
  if (std::filesystem::exists(truth_path)) {
    const auto truth = synthgen::read_truth(collection.root());
    std::map<std::string, double> clean;
    for (std::size_t i = 0; i < truth.ids.size() && i < truth.noiseless_targets.size(); ++i)
      clean[truth.ids[i]] = truth.noiseless_targets[i];
    VectorD target(static_cast<Eigen::Index>(ids.size()));
    bool complete = true;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto it = clean.find(ids[i]);
      complete = complete && it != clean.end();
      target(static_cast<Eigen::Index>(i)) = complete ? it->second : 0.0;
    }
    if (complete) {
      const auto n = regression_metrics(out.col(0), target);
      rep.metrics["mae_noiseless"] = n.mae;
      rep.metrics["rmse_noiseless"] = n.rmse;
      rep.metrics["pearson_noiseless"] = n.pearson;
      rep.metrics["spearman_noiseless"] = n.spearman;
    }
  }
  return rep;
}

// -- invariance --------------------------------------------------------------

std::vector<InvariancePoint> invariance_study(const encoder::Encoder& model,
                                              const interchange::Collection& collection,
                                              const InvarianceOptions& options) {
  auto ids = collection.ids(options.split);
  if (ids.empty()) ids = collection.ids();
  if (options.max_checkpoints > 0 && ids.size() > static_cast<std::size_t>(options.max_checkpoints))
    ids.resize(static_cast<std::size_t>(options.max_checkpoints));
  if (ids.empty()) throw Error(Errc::kEmptySplit, "no checkpoints for the invariance study");
  if (options.transforms_per_alpha < 1)
    throw Error(Errc::kInvalidArgument, "transforms_per_alpha must be positive");

  std::vector<interchange::LoraCheckpoint> originals;
  for (const auto& id : ids) originals.push_back(collection.load(id));
  std::vector<encoder::PreparedCheckpoint> base_items;
  for (const auto& c : originals) base_items.push_back(model.prepare(c));
  const MatrixD h0 = model.embed_all(base_items);
  const MatrixD y0 = model.head(nn::Tensor::constant(h0)).value();
  const bool multilabel = model.config().task == encoder::TaskKind::kMultilabel;

  std::vector<InvariancePoint> points;
  for (std::size_t ai = 0; ai < options.alphas.size(); ++ai) {
    const double alpha = options.alphas[ai];
    std::vector<double> drifts, agreements;
    double max_drift = 0.0;
    for (int t = 0; t < options.transforms_per_alpha; ++t) {
      std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                        static_cast<std::uint32_t>(ai), static_cast<std::uint32_t>(t)};
      std::mt19937_64 rng(seq);
      std::vector<encoder::PreparedCheckpoint> items;
      items.reserve(originals.size());
      for (const auto& c : originals) {
        interchange::LoraCheckpoint moved = c;
        for (auto& p : moved.positions)
          p.factors = canon::apply_gl(p.factors, canon::sample_gl(p.factors.rank(), alpha, rng));
        items.push_back(model.prepare(moved));
      }
      const MatrixD h = model.embed_all(items);
      const MatrixD y = model.head(nn::Tensor::constant(h)).value();
      double drift_sum = 0.0;
      for (Eigen::Index i = 0; i < h.rows(); ++i) {
        const double base = h0.row(i).norm();
        const double d = (h.row(i) - h0.row(i)).norm() / (base > 0.0 ? base : 1.0);
        drift_sum += d;
        max_drift = std::max(max_drift, d);
      }
      drifts.push_back(drift_sum / static_cast<double>(h.rows()));
      double agree = 0.0;
      for (Eigen::Index i = 0; i < y.rows(); ++i)
        for (Eigen::Index a = 0; a < y.cols(); ++a)
          agree += multilabel ? ((y(i, a) > 0.0) == (y0(i, a) > 0.0) ? 1.0 : 0.0)
                              : (std::abs(y(i, a) - y0(i, a)) <= options.regression_tolerance ? 1.0 : 0.0);
      agreements.push_back(agree / static_cast<double>(y.size()));
    }
    InvariancePoint pt;
    pt.alpha = alpha;
    pt.transforms = options.transforms_per_alpha;
    pt.checkpoints = static_cast<int>(originals.size());
    pt.mean_drift = mean_of(drifts);
    pt.drift_ci = ci_half_width(drifts);
    pt.max_drift = max_drift;
    pt.agreement = mean_of(agreements);
    pt.agreement_ci = ci_half_width(agreements);
    pt.min_agreement = *std::min_element(agreements.begin(), agreements.end());
    points.push_back(pt);
  }
  return points;
}

EvalReport invariance_report(const std::vector<InvariancePoint>& points) {
  EvalReport rep;
  rep.kind = "invariance";
  rep.meta["drift"] = "relative L2 embedding drift ||h' - h|| / ||h||";
  rep.meta["ci"] = "mean +- 1.96 standard errors over transforms";
  for (const auto& p : points) {
    rep.rows.push_back({{"alpha", format_double(p.alpha)},
                        {"transforms", std::to_string(p.transforms)},
                        {"checkpoints", std::to_string(p.checkpoints)},
                        {"rel_l2_drift_mean", format_double(p.mean_drift)},
                        {"rel_l2_drift_ci", format_double(p.drift_ci)},
                        {"rel_l2_drift_max", format_double(p.max_drift)},
                        {"agreement_mean", format_double(p.agreement)},
                        {"agreement_ci", format_double(p.agreement_ci)},
                        {"agreement_min", format_double(p.min_agreement)}});
    rep.metrics["drift@" + format_double(p.alpha)] = p.mean_drift;
    rep.metrics["agreement@" + format_double(p.alpha)] = p.agreement;
  }
  double worst_drift = 0.0, worst_agree = 1.0;
  for (const auto& p : points) {
    worst_drift = std::max(worst_drift, p.mean_drift);
    worst_agree = std::min(worst_agree, p.agreement);
  }
  rep.metrics["max_mean_drift"] = worst_drift;
  rep.metrics["min_agreement"] = worst_agree;
  return rep;
}

// -- ablation ----------------------------------------------------------------

std::vector<AblationRow> ablation_study(const interchange::Collection& collection,
                                        const encoder::EncoderConfig& base,
                                        const encoder::TrainOptions& options,
                                        const std::vector<encoder::Mode>& modes) {
  const auto schema = collection.manifest().label_schema;
  if (schema != LabelSchema::kMultilabel && schema != LabelSchema::kRegression)
    throw Error(Errc::kUnlabeledCollection, "ablation needs a supervised collection");
  std::vector<AblationRow> rows;
  for (const auto mode : modes) {
    encoder::EncoderConfig cfg = base;
    cfg.mode = mode;
    const auto start = std::chrono::steady_clock::now();
    auto result = encoder::train(collection, cfg, options);
    AblationRow row;
    row.mode = mode;
    row.best_epoch = result.best_epoch;
    row.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    row.metrics = evaluate(result.encoder, collection, Split::kTest).metrics;
    rows.push_back(std::move(row));
  }
  return rows;
}

EvalReport ablation_report(const std::vector<AblationRow>& rows) {
  EvalReport rep;
  rep.kind = "ablation";
  for (const auto& r : rows) {
    std::map<std::string, std::string> line{{"mode", encoder::to_string(r.mode)},
                                            {"best_epoch", std::to_string(r.best_epoch)}};
    for (const auto& [k, v] : r.metrics) {
      line[k] = format_double(v);
      rep.metrics[encoder::to_string(r.mode) + "." + k] = v;
    }
    rep.rows.push_back(std::move(line));
  }
  return rep;
}

// -- retrieval ---------------------------------------------------------------

RetrievalSet retrieval_set(const interchange::Collection& pool) {
  if (pool.manifest().label_schema != LabelSchema::kTaskRetrieval)
    throw Error(Errc::kLabelSchemaMismatch, "retrieval needs a task_retrieval collection");
  RetrievalSet s;
  s.query_ids = pool.ids(Split::kQuery);
  s.gallery_ids = pool.ids(Split::kGallery);
  if (s.gallery_ids.empty()) throw Error(Errc::kEmptyGallery, "collection has no gallery split");
  auto task_of = [&](const std::string& id) {
    const auto* t = std::get_if<std::string>(&pool.entry(id).label);
    if (!t) throw Error(Errc::kLabelSchemaMismatch, id + " has no task label");
    return *t;
  };
  for (const auto& id : s.query_ids) s.query_tasks.push_back(task_of(id));
  for (const auto& id : s.gallery_ids) s.gallery_tasks.push_back(task_of(id));
  return s;
}

RetrievalMetrics encoder_retrieval(const encoder::Encoder& model,
                                   const interchange::Collection& pool, int k) {
  const auto s = retrieval_set(pool);
  const MatrixD q = model.embed_all(encoder::prepare_all(model, pool, s.query_ids));
  const MatrixD g = model.embed_all(encoder::prepare_all(model, pool, s.gallery_ids));
  return retrieval_metrics(q, g, s.query_tasks, s.gallery_tasks, k);
}

RetrievalMetrics raw_cos_retrieval(const interchange::Collection& pool, int k) {
  const auto s = retrieval_set(pool);
  std::vector<interchange::LoraCheckpoint> gallery;
  for (const auto& id : s.gallery_ids) gallery.push_back(pool.load(id));
  MatrixD sim(static_cast<Eigen::Index>(s.query_ids.size()), static_cast<Eigen::Index>(gallery.size()));
  for (std::size_t i = 0; i < s.query_ids.size(); ++i) {
    const auto q = pool.load(s.query_ids[i]);
    for (std::size_t j = 0; j < gallery.size(); ++j)
      sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          encoder::raw_cos_similarity(q, gallery[j]);
  }
  return retrieval_from_similarity(sim, s.query_tasks, s.gallery_tasks, k);
}

EvalReport retrieval_report(const RetrievalMetrics& model, const RetrievalMetrics* baseline) {
  EvalReport rep;
  rep.kind = "retrieval";
  const std::string at = "ndcg@" + std::to_string(model.k);
  rep.metrics[at] = model.ndcg_at_k;
  rep.metrics["hit@1"] = model.hit_at_1;
  rep.metrics["mrr"] = model.mrr;
  rep.metrics["absent_queries"] = model.absent_queries;
  auto add_rows = [&](const std::string& method, const RetrievalMetrics& m) {
    for (const auto& [task, b] : m.per_task)
      rep.rows.push_back({{"method", method},
                          {"task", task},
                          {"queries", std::to_string(b.queries)},
                          {"absent", std::to_string(b.absent)},
                          {at, format_double(b.ndcg_at_k)},
                          {"hit@1", format_double(b.hit_at_1)},
                          {"mrr", format_double(b.mrr)}});
  };
  add_rows("w2t", model);
  if (baseline) {
    rep.metrics["rawcos." + at] = baseline->ndcg_at_k;
    rep.metrics["rawcos.hit@1"] = baseline->hit_at_1;
    rep.metrics["rawcos.mrr"] = baseline->mrr;
    add_rows("rawcos", *baseline);
  }
  return rep;
}

}  // namespace w2t::evalx
