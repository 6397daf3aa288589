// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <ostream>
#include <sstream>

#include "w2t/canon.hpp"
#include "w2t/encoder.hpp"
#include "w2t/error.hpp"
#include "w2t/studies.hpp"
#include "w2t/synthgen.hpp"
#include "w2t/version.hpp"

namespace w2t::cli {
namespace {

using json = nlohmann::json;

const std::vector<std::string> kSubcommands = {"gen-data", "canonize", "equiv-bench", "invariance",
                                               "train",    "eval",     "ablate",      "retrieve"};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AssertionFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("invalid number for " + what + ": " + s);
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

/// Splices --config keys in right after the subcommand so command-line
/// flags, which come later, take precedence.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (config_path.empty()) return args;
  std::ifstream in(config_path);
  if (!in) throw UsageError("cannot read config " + config_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  std::vector<std::string> injected;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) injected.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ",";
        joined += v.is_string() ? v.get<std::string>() : v.dump();
      }
      injected.push_back(flag);
      injected.push_back(joined);
    } else {
      injected.push_back(flag);
      injected.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return std::find(kSubcommands.begin(), kSubcommands.end(), a) != kSubcommands.end();
  });
  if (sub == args.end()) throw UsageError("--config requires a subcommand");
  args.insert(sub + 1, injected.begin(), injected.end());
  return args;
}

struct TrainFlags {
  std::string mode = "full";
  int epochs = 45;
  int batch = 64;
  double lr = 1e-3;
  double wd = 1e-3;
  int warmup = 4;
  std::uint64_t seed = 1;
  int d_model = 128;
  int rank_layers = 1;
  int pos_layers = 2;
  int heads = 4;
  int head_width = 64;

  void attach(CLI::App* app) {
    app->add_option("--mode", mode, "full | no_canon | no_rank_level | no_pos_level");
    app->add_option("--epochs", epochs)->check(CLI::NonNegativeNumber);
    app->add_option("--batch", batch)->check(CLI::PositiveNumber);
    app->add_option("--lr", lr)->check(CLI::PositiveNumber);
    app->add_option("--wd", wd)->check(CLI::NonNegativeNumber);
    app->add_option("--warmup", warmup)->check(CLI::NonNegativeNumber);
    app->add_option("--seed", seed);
    app->add_option("--d-model", d_model)->check(CLI::PositiveNumber);
    app->add_option("--rank-layers", rank_layers)->check(CLI::NonNegativeNumber);
    app->add_option("--pos-layers", pos_layers)->check(CLI::NonNegativeNumber);
    app->add_option("--heads", heads)->check(CLI::PositiveNumber);
    app->add_option("--head-width", head_width)->check(CLI::PositiveNumber);
  }

  encoder::TrainOptions options() const {
    encoder::TrainOptions o;
    o.epochs = epochs;
    o.batch = batch;
    o.base_lr = lr;
    o.weight_decay = wd;
    o.warmup = warmup;
    o.seed = seed;
    return o;
  }

  encoder::EncoderConfig config(const interchange::Collection& c) const {
    auto cfg = encoder::config_for(c, encoder::parse_mode(mode));
    cfg.d_model = d_model;
    cfg.rank_layers = rank_layers;
    cfg.pos_layers = pos_layers;
    cfg.heads = heads;
    cfg.head_width = head_width;
    cfg.validate();
    return cfg;
  }
};

struct ReportFlags {
  std::string json_path;
  std::string csv_path;
  std::vector<std::string> asserts;

  void attach(CLI::App* app) {
    app->add_option("--json", json_path, "write the JSON report here");
    app->add_option("--csv", csv_path, "write the CSV table here");
    app->add_option("--assert", asserts, "metric>=value; exit 3 when violated")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::string resolved;
  std::string hash;
  int threads = 1;
  bool deterministic = false;
};

void finish_report(evalx::EvalReport& rep, const ReportFlags& flags, const Context& ctx) {
  rep.meta["version"] = kVersion;
  rep.meta["config_hash"] = ctx.hash;
  rep.meta["config"] = ctx.resolved;
  rep.write(flags.json_path, flags.csv_path);
  for (const auto& text : flags.asserts) {
    const Assertion a = parse_assertion(text);
    const auto it = rep.metrics.find(a.metric);
    if (it == rep.metrics.end()) throw UsageError("--assert names unknown metric " + a.metric);
    const double v = it->second;
    const bool ok = a.op == ">=" ? v >= a.value
                    : a.op == "<=" ? v <= a.value
                    : a.op == ">"  ? v > a.value
                                   : v < a.value;
    ctx.out << "assert " << a.metric << a.op << fmt(a.value) << ": " << (ok ? "ok" : "FAILED")
            << " (" << fmt(v) << ")\n";
    if (!ok) throw AssertionFailed(text);
  }
}

void print_metrics(std::ostream& out, const evalx::EvalReport& rep) {
  for (const auto& [k, v] : rep.metrics) out << "  " << k << " = " << fmt(v) << "\n";
}

}  // namespace

Assertion parse_assertion(const std::string& text) {
  for (const std::string op : {">=", "<=", ">", "<"}) {
    const auto pos = text.find(op);
    if (pos != std::string::npos && pos > 0) {
      Assertion a;
      a.metric = text.substr(0, pos);
      a.op = op;
      a.value = to_double(text.substr(pos + op.size()), "--assert");
      return a;
    }
  }
  throw UsageError("assertion must look like metric>=value: " + text);
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  CLI::App app{"w2t: canonical weight-to-token encoding of LoRA checkpoints", "w2t"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(0, 1);
  bool show_version = false;
  int threads = 1;
  bool deterministic = false;
  app.add_flag("--version", show_version, "print artifact and format versions");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", deterministic, "force single-threaded, reproducible execution");

  // gen-data
  synthgen::GenSpec spec;
  std::string gen_out, gen_modules = "q,v", gen_schema = "multilabel";
  bool gen_probe = false;
  ReportFlags gen_report;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic collection");
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--n", spec.n_checkpoints)->check(CLI::PositiveNumber);
  gen->add_option("--layers", spec.layer_count)->check(CLI::PositiveNumber);
  gen->add_option("--modules", gen_modules, "comma list of q,k,v,o,other or byte codes");
  gen->add_option("--d-out", spec.d_out)->check(CLI::PositiveNumber);
  gen->add_option("--d-in", spec.d_in)->check(CLI::PositiveNumber);
  gen->add_option("--rank", spec.rank)->check(CLI::PositiveNumber);
  gen->add_option("--schema", gen_schema, "multilabel | regression | task_retrieval | unlabeled");
  gen->add_option("--label-dim", spec.label_dim);
  gen->add_option("--signal", spec.signal_strength);
  gen->add_option("--noise", spec.noise_std);
  gen->add_option("--gl-alpha", spec.gl_alpha);
  gen->add_option("--seed", spec.seed);
  gen->add_option("--prior", spec.attribute_prior);
  gen->add_option("--jitter", spec.amplitude_jitter);
  gen->add_option("--target-noise", spec.target_noise);
  gen->add_option("--tasks", spec.tasks);
  gen->add_option("--components-per-task", spec.components_per_task);
  gen->add_option("--shared-strength", spec.shared_strength);
  gen->add_option("--queries", spec.queries);
  gen->add_flag("--probe", gen_probe, "run the oracle probe on the result");
  gen_report.attach(gen);

  // canonize
  std::string can_in, can_out;
  auto* can = app.add_subcommand("canonize", "write canonical (U, sigma, V) files for a collection");
  can->add_option("--in", can_in)->required();
  can->add_option("--out", can_out)->required();

  // equiv-bench
  std::string bench_dims = "1024,2048,3072", bench_precision = "f32";
  canon::BenchOptions bench;
  ReportFlags bench_report;
  auto* eq = app.add_subcommand("equiv-bench", "QR-SVD vs dense SVD equivalence and timing");
  eq->add_option("--dims", bench_dims, "comma list of d or d_outxd_in");
  eq->add_option("--rank", bench.rank)->check(CLI::PositiveNumber);
  eq->add_option("--trials", bench.trials)->check(CLI::NonNegativeNumber);
  eq->add_option("--seed", bench.seed);
  eq->add_option("--precision", bench_precision, "f32 | f64");
  bench_report.attach(eq);

  // train
  std::string train_data, train_out, train_log;
  TrainFlags train_flags;
  auto* tr = app.add_subcommand("train", "train an encoder");
  tr->add_option("--data", train_data)->required();
  tr->add_option("--out", train_out, "model directory")->required();
  tr->add_option("--log", train_log, "training log JSON (default <out>/train_log.json)");
  train_flags.attach(tr);

  // eval
  std::string eval_data, eval_model, eval_split = "test";
  ReportFlags eval_report;
  auto* ev = app.add_subcommand("eval", "evaluate a trained encoder");
  ev->add_option("--data", eval_data)->required();
  ev->add_option("--model", eval_model)->required();
  ev->add_option("--split", eval_split);
  eval_report.attach(ev);

  // invariance
  std::string inv_data, inv_model, inv_alphas = "0,0.01,0.1,0.5,1.0", inv_split = "test";
  evalx::InvarianceOptions inv_opts;
  TrainFlags inv_init;
  ReportFlags inv_report;
  auto* inv = app.add_subcommand("invariance", "GL(r) drift and decision-agreement study");
  inv->add_option("--data", inv_data)->required();
  inv->add_option("--model", inv_model, "trained model; omitted means a freshly initialized one");
  inv->add_option("--alphas", inv_alphas);
  inv->add_option("--transforms", inv_opts.transforms_per_alpha)->check(CLI::PositiveNumber);
  inv->add_option("--max-checkpoints", inv_opts.max_checkpoints)->check(CLI::NonNegativeNumber);
  inv->add_option("--study-seed", inv_opts.seed);
  inv->add_option("--split", inv_split);
  inv->add_option("--mode", inv_init.mode);
  inv->add_option("--seed", inv_init.seed);
  inv_report.attach(inv);

  // ablate
  std::string abl_data, abl_modes = "full,no_canon,no_rank_level,no_pos_level";
  TrainFlags abl_flags;
  ReportFlags abl_report;
  auto* abl = app.add_subcommand("ablate", "train and compare encoder modes");
  abl->add_option("--data", abl_data)->required();
  abl->add_option("--modes", abl_modes);
  abl_flags.attach(abl);
  abl->remove_option(abl->get_option("--mode"));
  abl_report.attach(abl);

  // retrieve
  std::string ret_data, ret_model;
  int ret_k = 10;
  bool ret_baseline = false;
  ReportFlags ret_report;
  auto* ret = app.add_subcommand("retrieve", "task retrieval with frozen embeddings");
  ret->add_option("--data", ret_data)->required();
  ret->add_option("--model", ret_model)->required();
  ret->add_option("--k", ret_k)->check(CLI::PositiveNumber);
  ret->add_flag("--baseline", ret_baseline, "also score the raw-factor cosine baseline");
  ret_report.attach(ret);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  if (show_version) {
    out << "w2t " << kVersion << " (checkpoint format LWC" << kCheckpointFormatVersion
        << ", manifest format " << kManifestFormatVersion << ", snapshot format "
        << kSnapshotFormatVersion << ")\n";
    return kExitOk;
  }
  const auto parsed = app.get_subcommands();
  if (parsed.empty()) {
    err << "error: a subcommand is required\n" << app.help();
    return kExitUsage;
  }
  CLI::App* sub = parsed.front();

  Context ctx{out, err, "", "", deterministic ? 1 : threads, deterministic};
  ctx.resolved = "subcommand = \"" + sub->get_name() + "\"\n" + sub->config_to_str(true, false) +
                 "threads = " + std::to_string(ctx.threads) + "\ndeterministic = " +
                 (deterministic ? "true" : "false") + "\n";
  ctx.hash = evalx::hex64(evalx::fnv1a64(ctx.resolved));

  try {
    if (sub == gen) {
      spec.modules.clear();
      for (const auto& m : split_list(gen_modules)) spec.modules.push_back(interchange::parse_module(m));
      spec.label_schema = interchange::parse_label_schema(gen_schema);
      const auto man = synthgen::generate(spec, gen_out);
      out << "generated " << man.checkpoints.size() << " checkpoints (" << gen_schema << ") in "
          << gen_out << "\n";
      if (gen_probe) {
        const auto p = synthgen::oracle_probe(gen_out);
        evalx::EvalReport rep;
        rep.kind = "oracle_probe";
        if (p.schema == interchange::LabelSchema::kMultilabel) {
          rep.metrics = {{"mauroc", p.mauroc}, {"macro_f1", p.macro_f1}, {"micro_f1", p.micro_f1}};
        } else {
          rep.metrics = {{"pearson_noiseless", p.pearson}, {"spearman_noiseless", p.spearman}, {"mae_noiseless", p.mae}};
        }
        out << "oracle probe (test split):\n";
        print_metrics(out, rep);
        finish_report(rep, gen_report, ctx);
      }
    } else if (sub == can) {
      const auto coll = interchange::load_collection(can_in);
      std::filesystem::create_directories(can_out);
      for (const auto& id : coll.ids()) {
        const auto ckpt = coll.load(id);
        std::vector<interchange::CanonicalPosition> cps;
        for (const auto& p : ckpt.positions) {
          auto c = canon::canonize(p.factors);
          cps.push_back({p.key, std::move(c.u), std::move(c.sigma), std::move(c.v)});
        }
        interchange::write_canonical_file(cps, std::filesystem::path(can_out) / (id + ".lwcc"));
      }
      out << "canonized " << coll.ids().size() << " checkpoints into " << can_out << "\n";
    } else if (sub == eq) {
      if (bench_precision == "f32") bench.precision = canon::Precision::kFloat32;
      else if (bench_precision == "f64") bench.precision = canon::Precision::kFloat64;
      else throw UsageError("--precision must be f32 or f64");
      for (const auto& d : split_list(bench_dims)) {
        const auto x = d.find('x');
        const auto a = static_cast<Eigen::Index>(to_double(d.substr(0, x), "--dims"));
        const auto b = x == std::string::npos ? a : static_cast<Eigen::Index>(to_double(d.substr(x + 1), "--dims"));
        if (a < 1 || b < 1) throw UsageError("--dims entries must be positive");
        bench.dims.emplace_back(a, b);
      }
      const auto start = std::chrono::steady_clock::now();
      const auto reports = canon::bench_equivalence(bench);
      const double total_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      evalx::EvalReport rep;
      rep.kind = "equivalence";
      for (const auto& r : reports) {
        const std::string tag = std::to_string(r.d_out) + "x" + std::to_string(r.d_in);
        rep.rows.push_back({{"d_out", std::to_string(r.d_out)},
                            {"d_in", std::to_string(r.d_in)},
                            {"rank", std::to_string(r.rank)},
                            {"trials", std::to_string(r.trials)},
                            {"sigma_gap", fmt(r.sigma_gap)},
                            {"update_gap", fmt(r.update_gap)},
                            {"u_subspace_cos", fmt(r.u_subspace_cos)},
                            {"v_subspace_cos", fmt(r.v_subspace_cos)},
                            {"time_direct_ms", fmt(r.time_direct_ms)},
                            {"time_qr_ms", fmt(r.time_qr_ms)},
                            {"speedup", fmt(r.speedup)}});
        for (const auto& [k, v] : std::map<std::string, double>{{"sigma_gap", r.sigma_gap},
                                                                 {"update_gap", r.update_gap},
                                                                 {"u_subspace_cos", r.u_subspace_cos},
                                                                 {"v_subspace_cos", r.v_subspace_cos},
                                                                 {"speedup", r.speedup}}) {
          rep.metrics[k + "@" + tag] = v;
          rep.metrics[k] = v;
        }
        out << tag << " r=" << r.rank << " trials=" << r.trials << ": sigma_gap=" << fmt(r.sigma_gap)
            << " update_gap=" << fmt(r.update_gap) << " cos_u=" << fmt(r.u_subspace_cos)
            << " cos_v=" << fmt(r.v_subspace_cos) << " direct=" << fmt(r.time_direct_ms)
            << "ms qr=" << fmt(r.time_qr_ms) << "ms speedup=" << fmt(r.speedup) << "x\n";
      }
      rep.metrics["total_seconds"] = total_s;
      finish_report(rep, bench_report, ctx);
    } else if (sub == tr) {
      const auto coll = interchange::load_collection(train_data);
      const auto cfg = train_flags.config(coll);
      auto opts = train_flags.options();
      opts.on_epoch = [&](const encoder::EpochLog& e) {
        out << "epoch " << e.epoch << " [" << e.stage << "] lr=" << fmt(e.lr)
            << " train=" << fmt(e.train_loss) << " val=" << fmt(e.val_loss);
        for (const auto& [k, v] : e.val_metrics) out << " " << k << "=" << fmt(v);
        out << "\n";
      };
      auto result = encoder::train(coll, cfg, opts);
      result.encoder.save(train_out, result.best_epoch);
      const std::filesystem::path log_path =
          train_log.empty() ? std::filesystem::path(train_out) / "train_log.json" : std::filesystem::path(train_log);
      std::ofstream(log_path, std::ios::trunc) << encoder::train_log_json(result.log) << "\n";
      json run;
      run["version"] = kVersion;
      run["config"] = ctx.resolved;
      run["config_hash"] = ctx.hash;
      run["best_epoch"] = result.best_epoch;
      run["best_val_loss"] = result.best_val_loss;
      std::ofstream(std::filesystem::path(train_out) / "run.json", std::ios::trunc) << run.dump(2) << "\n";
      out << "saved model to " << train_out << " (best epoch " << result.best_epoch << ")\n";
    } else if (sub == ev) {
      const auto coll = interchange::load_collection(eval_data);
      const auto model = encoder::Encoder::load(eval_model);
      auto rep = evalx::evaluate(model, coll, interchange::parse_split(eval_split));
      print_metrics(out, rep);
      finish_report(rep, eval_report, ctx);
    } else if (sub == inv) {
      const auto coll = interchange::load_collection(inv_data);
      inv_opts.alphas.clear();
      for (const auto& a : split_list(inv_alphas)) inv_opts.alphas.push_back(to_double(a, "--alphas"));
      inv_opts.split = interchange::parse_split(inv_split);
      const auto model = inv_model.empty()
                             ? encoder::Encoder(inv_init.config(coll), inv_init.seed)
                             : encoder::Encoder::load(inv_model);
      const auto points = evalx::invariance_study(model, coll, inv_opts);
      auto rep = evalx::invariance_report(points);
      rep.meta["mode"] = encoder::to_string(model.config().mode);
      for (const auto& p : points)
        out << "alpha=" << fmt(p.alpha) << " drift=" << fmt(p.mean_drift) << " +- " << fmt(p.drift_ci)
            << " agreement=" << fmt(p.agreement) << "\n";
      finish_report(rep, inv_report, ctx);
    } else if (sub == abl) {
      const auto coll = interchange::load_collection(abl_data);
      std::vector<encoder::Mode> modes;
      for (const auto& m : split_list(abl_modes)) modes.push_back(encoder::parse_mode(m));
      if (modes.empty()) throw UsageError("--modes is empty");
      const auto rows = evalx::ablation_study(coll, abl_flags.config(coll), abl_flags.options(), modes);
      auto rep = evalx::ablation_report(rows);
      for (const auto& r : rows) {
        out << encoder::to_string(r.mode) << ":";
        for (const auto& [k, v] : r.metrics) out << " " << k << "=" << fmt(v);
        out << "\n";
      }
      finish_report(rep, abl_report, ctx);
    } else if (sub == ret) {
      const auto coll = interchange::load_collection(ret_data);
      const auto model = encoder::Encoder::load(ret_model);
      const auto m = evalx::encoder_retrieval(model, coll, ret_k);
      std::optional<evalx::RetrievalMetrics> base;
      if (ret_baseline) base = evalx::raw_cos_retrieval(coll, ret_k);
      auto rep = evalx::retrieval_report(m, base ? &*base : nullptr);
      print_metrics(out, rep);
      finish_report(rep, ret_report, ctx);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const AssertionFailed& e) {
    err << "assertion failed: " << e.what() << "\n";
    return kExitAssertion;
  } catch (const Error& e) {
    err << "error [" << errc_name(e.code()) << "]: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace w2t::cli
