// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "w2t/encoder.hpp"
#include "w2t/error.hpp"
#include "w2t/metrics.hpp"
#include "w2t/nn/optim.hpp"

namespace w2t::encoder {

using interchange::LabelSchema;
using json = nlohmann::json;

namespace {

TaskKind task_for(LabelSchema schema) {
  switch (schema) {
    case LabelSchema::kMultilabel: return TaskKind::kMultilabel;
    case LabelSchema::kRegression: return TaskKind::kRegression;
    default:
      throw Error(Errc::kLabelSchemaMismatch,
                  "training needs a multilabel or regression collection, got " + to_string(schema));
  }
}

nn::Tensor loss_for(TaskKind task, const nn::Tensor& out, const MatrixD& targets) {
  return task == TaskKind::kMultilabel ? nn::bce_with_logits(out, targets) : nn::mse(out, targets);
}

double loss_value(TaskKind task, const MatrixD& out, const MatrixD& targets) {
  nn::NoGradGuard guard;
  return loss_for(task, nn::Tensor::constant(out), targets).item();
}

std::map<std::string, double> val_metrics(TaskKind task, const MatrixD& out, const MatrixD& targets) {
  std::map<std::string, double> m;
  try {
    if (task == TaskKind::kMultilabel) {
      const auto c = evalx::classification_metrics(out, targets);
      m["macro_f1"] = c.macro_f1;
      m["micro_f1"] = c.micro_f1;
      m["mauroc"] = c.mauroc;
    } else {
      const auto r = evalx::regression_metrics(out.col(0), targets.col(0));
      m["mae"] = r.mae;
      m["rmse"] = r.rmse;
      m["pearson"] = r.pearson;
      m["spearman"] = r.spearman;
    }
  } catch (const Error&) {
    // tiny validation splits can be degenerate; the loss still drives selection
  }
  return m;
}

void gate(nn::ParamStore& params, nn::Stage stage) {
  const auto& warm = Encoder::warmup_groups();
  for (auto& g : params.groups()) {
    const bool on = stage == nn::Stage::kFull ||
                    std::find(warm.begin(), warm.end(), g.name) != warm.end();
    params.set_trainable(g.name, on);
  }
}

}  // namespace

EncoderConfig config_for(const interchange::Collection& collection, Mode mode) {
  const auto& man = collection.manifest();
  EncoderConfig c;
  c.mode = mode;
  c.rank = man.rank;
  c.layer_count = man.layer_count;
  c.task = task_for(man.label_schema);
  c.output_dim = c.task == TaskKind::kMultilabel ? man.label_dim : 1;
  const auto ids = collection.ids();
  if (ids.empty()) throw Error(Errc::kEmptySplit, "collection has no checkpoints");
  const auto first = collection.load(ids.front());
  c.d_out = static_cast<int>(first.positions.front().factors.d_out());
  c.d_in = static_cast<int>(first.positions.front().factors.d_in());
  return c;
}

std::vector<PreparedCheckpoint> prepare_all(const Encoder& encoder,
                                            const interchange::Collection& collection,
                                            const std::vector<std::string>& ids) {
  std::vector<PreparedCheckpoint> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(encoder.prepare(collection.load(id)));
  return out;
}

MatrixD label_matrix(const interchange::Collection& collection, const std::vector<std::string>& ids) {
  const auto& man = collection.manifest();
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (man.label_schema == LabelSchema::kMultilabel) {
    MatrixD y(n, man.label_dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto* bits = std::get_if<std::vector<std::uint8_t>>(&collection.entry(ids[i]).label);
      if (!bits || static_cast<int>(bits->size()) != man.label_dim)
        throw Error(Errc::kLabelSchemaMismatch, ids[i] + ": missing attribute label");
      for (int a = 0; a < man.label_dim; ++a) y(i, a) = (*bits)[a] ? 1.0 : 0.0;
    }
    return y;
  }
  if (man.label_schema == LabelSchema::kRegression) {
    MatrixD y(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto* v = std::get_if<double>(&collection.entry(ids[i]).label);
      if (!v) throw Error(Errc::kLabelSchemaMismatch, ids[i] + ": missing score label");
      y(i, 0) = *v;
    }
    return y;
  }
  throw Error(Errc::kLabelSchemaMismatch, "no supervised labels in " + to_string(man.label_schema));
}

TrainResult train(const interchange::Collection& collection, const EncoderConfig& config,
                  const TrainOptions& options) {
  const auto schema = collection.manifest().label_schema;
  if (options.expect_schema && *options.expect_schema != schema)
    throw Error(Errc::kLabelSchemaMismatch, "expected " + to_string(*options.expect_schema) +
                                                " labels, collection has " + to_string(schema));
  if (task_for(schema) != config.task)
    throw Error(Errc::kLabelSchemaMismatch,
                "encoder task " + to_string(config.task) + " does not match " + to_string(schema));
  if (options.batch < 1) throw Error(Errc::kInvalidArgument, "batch must be positive");

  const auto train_ids = collection.ids(interchange::Split::kTrain);
  const auto val_ids = collection.ids(interchange::Split::kVal);
  if (train_ids.empty()) throw Error(Errc::kEmptySplit, "train split is empty");
  if (val_ids.empty()) throw Error(Errc::kEmptySplit, "val split is empty");

  TrainResult result{Encoder(config, options.seed), {}, -1, 0.0};
  Encoder& enc = result.encoder;
  if (options.epochs <= 0) return result;

  const auto train_items = prepare_all(enc, collection, train_ids);
  const auto val_items = prepare_all(enc, collection, val_ids);
  const MatrixD y_train = label_matrix(collection, train_ids);
  const MatrixD y_val = label_matrix(collection, val_ids);

  nn::AdamW opt(nn::AdamWConfig{0.9, 0.999, 1e-8, options.weight_decay});
  std::mt19937_64 shuffle_rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_items.size());
  std::iota(order.begin(), order.end(), 0);

  nn::ParamStore best;
  double best_loss = std::numeric_limits<double>::infinity();
  const auto batch = static_cast<std::size_t>(options.batch);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const auto sched = nn::lr_schedule(epoch, options.epochs, options.base_lr, options.warmup);
    gate(enc.params(), sched.stage);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += batch) {
      const std::size_t hi = std::min(order.size(), lo + batch);
      std::vector<const PreparedCheckpoint*> ptrs;
      MatrixD targets(static_cast<Eigen::Index>(hi - lo), y_train.cols());
      for (std::size_t i = lo; i < hi; ++i) {
        ptrs.push_back(&train_items[order[i]]);
        targets.row(static_cast<Eigen::Index>(i - lo)) = y_train.row(static_cast<Eigen::Index>(order[i]));
      }
      const nn::Tensor loss = loss_for(config.task, enc.head(enc.embed(ptrs)), targets);
      loss_sum += loss.item() * static_cast<double>(hi - lo);
      const nn::GradientMap grads = nn::backward(loss);
      opt.step(enc.params(), grads, sched.lr);
    }

    const MatrixD val_out = enc.predict_all(val_items, batch);
    EpochLog log;
    log.epoch = epoch;
    log.stage = sched.stage == nn::Stage::kWarmup ? "warmup" : "full";
    log.lr = sched.lr;
    log.train_loss = loss_sum / static_cast<double>(order.size());
    log.val_loss = loss_value(config.task, val_out, y_val);
    log.val_metrics = val_metrics(config.task, val_out, y_val);
    if (log.val_loss < best_loss) {
      best_loss = log.val_loss;
      best = enc.params().clone();
      result.best_epoch = epoch;
    }
    result.log.push_back(log);
    if (options.on_epoch) options.on_epoch(log);
  }

  gate(enc.params(), nn::Stage::kFull);
  if (result.best_epoch >= 0) enc.params().copy_values_from(best);
  result.best_val_loss = best_loss;
  return result;
}

std::string train_log_json(const std::vector<EpochLog>& log) {
  json arr = json::array();
  for (const auto& e : log) {
    json j;
    j["epoch"] = e.epoch;
    j["stage"] = e.stage;
    j["lr"] = e.lr;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["val_metrics"] = e.val_metrics;
    arr.push_back(j);
  }
  return arr.dump(2);
}

}  // namespace w2t::encoder
