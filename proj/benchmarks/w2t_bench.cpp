// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "w2t/canon.hpp"
#include "w2t/encoder.hpp"

namespace {

using namespace w2t;

template <typename T>
interchange::BasicFactorPair<T> random_pair(Eigen::Index d, Eigen::Index r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  interchange::BasicFactorPair<T> fp;
  fp.b.resize(d, r);
  fp.a.resize(r, d);
  for (Eigen::Index i = 0; i < fp.b.size(); ++i) fp.b.data()[i] = static_cast<T>(n(rng));
  for (Eigen::Index i = 0; i < fp.a.size(); ++i) fp.a.data()[i] = static_cast<T>(n(rng));
  return fp;
}

void BM_Canonize(benchmark::State& state) {
  const auto fp = random_pair<float>(state.range(0), state.range(1), 1);
  for (auto _ : state) benchmark::DoNotOptimize(canon::canonize(fp));
  state.SetLabel("d=" + std::to_string(state.range(0)) + " r=" + std::to_string(state.range(1)));
}
BENCHMARK(BM_Canonize)->Args({96, 8})->Args({1024, 8})->Args({3072, 8})->Args({3072, 64})
    ->Unit(benchmark::kMicrosecond);

void BM_DenseOracle(benchmark::State& state) {
  const auto fp = random_pair<float>(state.range(0), state.range(1), 1);
  for (auto _ : state) benchmark::DoNotOptimize(canon::dense_svd_oracle(fp));
}
BENCHMARK(BM_DenseOracle)->Args({96, 8})->Args({1024, 8})->Args({3072, 8})->Unit(benchmark::kMillisecond);

void BM_ApplyGl(benchmark::State& state) {
  const auto fp = random_pair<float>(state.range(0), 8, 2);
  std::mt19937_64 rng(3);
  const auto g = canon::sample_gl(8, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(canon::apply_gl(fp, g));
}
BENCHMARK(BM_ApplyGl)->Arg(96)->Arg(3072)->Unit(benchmark::kMicrosecond);

interchange::LoraCheckpoint checkpoint(int layers, Eigen::Index d, Eigen::Index r, std::uint64_t seed) {
  interchange::LoraCheckpoint c;
  c.id = "bench";
  for (int l = 0; l < layers; ++l)
    for (std::uint8_t m : {std::uint8_t{0}, std::uint8_t{2}})
      c.positions.push_back({{static_cast<std::uint32_t>(l), m}, random_pair<float>(d, r, seed + 2 * l + m)});
  return c;
}

void BM_EncoderEmbed(benchmark::State& state) {
  encoder::EncoderConfig cfg;
  const auto ckpt = checkpoint(cfg.layer_count, cfg.d_out, cfg.rank, 4);
  const encoder::Encoder enc(cfg, 1);
  const auto prep = enc.prepare(ckpt);
  const std::vector<encoder::PreparedCheckpoint> batch(static_cast<std::size_t>(state.range(0)), prep);
  for (auto _ : state) benchmark::DoNotOptimize(enc.embed_all(batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncoderEmbed)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_EncoderPrepare(benchmark::State& state) {
  encoder::EncoderConfig cfg;
  const auto ckpt = checkpoint(cfg.layer_count, cfg.d_out, cfg.rank, 5);
  const encoder::Encoder enc(cfg, 1);
  for (auto _ : state) benchmark::DoNotOptimize(enc.prepare(ckpt));
}
BENCHMARK(BM_EncoderPrepare)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
