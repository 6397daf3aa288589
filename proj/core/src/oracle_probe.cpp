// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>

#include "w2t/canon.hpp"
#include "w2t/error.hpp"
#include "w2t/metrics.hpp"
#include "w2t/synthgen.hpp"

namespace w2t::synthgen {

using interchange::LabelSchema;
using interchange::Split;

VectorD probe_features(const interchange::LoraCheckpoint& ckpt,
                       const std::vector<PlantedPosition>& planted) {
  if (planted.empty()) throw Error(Errc::kInvalidArgument, "no planted directions");
  const Eigen::Index c = planted.front().u.cols();
  VectorD f = VectorD::Zero(static_cast<Eigen::Index>(planted.size()) * c);
  for (std::size_t p = 0; p < planted.size(); ++p) {
    const auto it = std::find_if(ckpt.positions.begin(), ckpt.positions.end(),
                                 [&](const auto& pos) { return pos.key == planted[p].key; });
    if (it == ckpt.positions.end())
      throw Error(Errc::kLayoutMismatch, ckpt.id + ": position missing for probe");
    const auto can = canon::canonize(it->factors);
    const MatrixD proj = (planted[p].u.transpose() * can.u.cast<double>()).cwiseAbs();
    f.segment(static_cast<Eigen::Index>(p) * c, c) = proj * can.sigma.cast<double>();
  }
  return f;
}

namespace {

struct Standardizer {
  VectorD mean, scale;

  explicit Standardizer(const MatrixD& x) {
    mean = x.colwise().mean().transpose();
    scale = VectorD::Ones(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double sd = std::sqrt((x.col(j).array() - mean(j)).square().mean());
      if (sd > 0.0) scale(j) = sd;
    }
  }
  MatrixD apply(const MatrixD& x) const {
    MatrixD out = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = (x.col(j).array() - mean(j)) / scale(j);
    return out;
  }
};

MatrixD with_bias(const MatrixD& x) {
  MatrixD out(x.rows(), x.cols() + 1);
  out << x, VectorD::Ones(x.rows());
  return out;
}

VectorD sigmoid(const VectorD& z) { return (1.0 + (-z.array()).exp()).inverse(); }

VectorD ridge(const MatrixD& x, const VectorD& y, double lambda) {
  MatrixD gram = x.transpose() * x;
  gram.diagonal().array() += lambda;
  return gram.ldlt().solve(x.transpose() * y);
}

VectorD logistic_fit(const MatrixD& x, const VectorD& y) {
  VectorD w = VectorD::Zero(x.cols());
  const double n = static_cast<double>(x.rows());
  for (int step = 0; step < 400; ++step) {
    const VectorD g = x.transpose() * (sigmoid(x * w) - y) / n + 1e-4 * w;
    w -= 0.5 * g;
  }
  return w;
}

}  // namespace

ProbeReport oracle_probe(const std::filesystem::path& collection_path) {
  const auto collection = interchange::load_collection(collection_path);
  const auto& man = collection.manifest();
  if (man.label_schema != LabelSchema::kMultilabel && man.label_schema != LabelSchema::kRegression)
    throw Error(Errc::kUnlabeledCollection,
                "oracle probe needs attribute or score labels, collection is " +
                    interchange::to_string(man.label_schema));
  for (const auto& e : man.checkpoints)
    if (std::holds_alternative<std::monostate>(e.label))
      throw Error(Errc::kUnlabeledCollection, e.id + " has no label");

  const Truth truth = read_truth(collection.root());
  const auto planted = planted_directions(truth.spec);
  std::map<std::string, double> clean;
  for (std::size_t i = 0; i < truth.noiseless_targets.size() && i < truth.ids.size(); ++i)
    clean[truth.ids[i]] = truth.noiseless_targets[i];

  const auto train_ids = collection.ids(Split::kTrain);
  const auto test_ids = collection.ids(Split::kTest);
  if (train_ids.empty() || test_ids.empty()) throw Error(Errc::kEmptySplit, "probe needs train and test");

  auto features = [&](const std::vector<std::string>& ids) {
    MatrixD x(static_cast<Eigen::Index>(ids.size()),
              static_cast<Eigen::Index>(planted.size()) * planted.front().u.cols());
    for (std::size_t i = 0; i < ids.size(); ++i)
      x.row(static_cast<Eigen::Index>(i)) = probe_features(collection.load(ids[i]), planted).transpose();
    return x;
  };
  const MatrixD x_train_raw = features(train_ids);
  const Standardizer stdz(x_train_raw);
  const MatrixD x_train = with_bias(stdz.apply(x_train_raw));
  const MatrixD x_test = with_bias(stdz.apply(features(test_ids)));

  ProbeReport rep;
  rep.schema = man.label_schema;
  rep.train_size = train_ids.size();
  rep.test_size = test_ids.size();

  if (man.label_schema == LabelSchema::kMultilabel) {
    const int k = man.label_dim;
    auto labels = [&](const std::vector<std::string>& ids) {
      MatrixD y(static_cast<Eigen::Index>(ids.size()), k);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& bits = std::get<std::vector<std::uint8_t>>(collection.entry(ids[i]).label);
        for (int a = 0; a < k; ++a) y(static_cast<Eigen::Index>(i), a) = bits[a] ? 1.0 : 0.0;
      }
      return y;
    };
    const MatrixD y_train = labels(train_ids);
    const MatrixD y_test = labels(test_ids);
    MatrixD logits(x_test.rows(), k);
    for (int a = 0; a < k; ++a) logits.col(a) = x_test * logistic_fit(x_train, y_train.col(a));
    const auto m = evalx::classification_metrics(logits, y_test);
    rep.mauroc = m.mauroc;
    rep.macro_f1 = m.macro_f1;
    rep.micro_f1 = m.micro_f1;
    return rep;
  }

  auto scores = [&](const std::vector<std::string>& ids) {
    VectorD y(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) y(static_cast<Eigen::Index>(i)) = std::get<double>(collection.entry(ids[i]).label);
    return y;
  };
  const VectorD y_train = scores(train_ids);
  const VectorD logit_train =
      y_train.unaryExpr([](double v) { const double c = std::clamp(v, 0.01, 0.99); return std::log(c / (1.0 - c)); });
  VectorD w = ridge(x_train, logit_train, 1e-3);
  const double n = static_cast<double>(x_train.rows());
  for (int step = 0; step < 300; ++step) {
    const VectorD p = sigmoid(x_train * w);
    const VectorD g = x_train.transpose() * ((p - y_train).array() * p.array() * (1.0 - p.array())).matrix() * (2.0 / n);
    w -= 2.0 * g;
  }
  const VectorD pred = sigmoid(x_test * w);
  VectorD target(pred.size());
  for (std::size_t i = 0; i < test_ids.size(); ++i) {
    const auto it = clean.find(test_ids[i]);
    target(static_cast<Eigen::Index>(i)) =
        it != clean.end() ? it->second : std::get<double>(collection.entry(test_ids[i]).label);
  }
  const auto m = evalx::regression_metrics(pred, target);
  rep.pearson = m.pearson;
  rep.spearman = m.spearman;
  rep.mae = m.mae;
  return rep;
}

}  // namespace w2t::synthgen
