// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels against the batched OpenMP kernels.
#include "gaitloop/neural.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace gaitloop;

namespace {

struct Fixture {
  neural::Model model{neural::ModelShape{}, neural::ModelMeta{}};
  std::vector<ingest::WindowPair> pairs;
  std::vector<const ingest::WindowPair*> ptrs;
  std::vector<const Matrix*> windows;

  Fixture(std::size_t count, std::size_t n) {
    neural::init_params(model, 7);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    pairs.resize(count);
    for (auto& p : pairs) {
      p.input.resize(static_cast<Eigen::Index>(n), 12);
      for (Eigen::Index i = 0; i < p.input.size(); ++i) p.input.data()[i] = g(rng);
      p.target = Vector::NullaryExpr(6, [&] { return 100.0 * std::abs(g(rng)); });
    }
    for (const auto& p : pairs) {
      ptrs.push_back(&p);
      windows.push_back(&p.input);
    }
  }
};

void BM_GradientSerial(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)), 20);
  for (auto _ : st) benchmark::DoNotOptimize(neural::serial::loss_and_gradient(f.model, f.ptrs));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_GradientBatched(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)), 20);
  for (auto _ : st) benchmark::DoNotOptimize(neural::loss_and_gradient(f.model, f.ptrs));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_PredictSerial(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)), 20);
  for (auto _ : st) benchmark::DoNotOptimize(neural::serial::predict_many(f.model, f.windows));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_PredictBatched(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)), 20);
  for (auto _ : st) benchmark::DoNotOptimize(neural::predict_many(f.model, f.windows));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_ForwardSingle(benchmark::State& st) {
  Fixture f(1, static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(neural::forward(f.model, f.pairs[0].input));
}

}  // namespace

BENCHMARK(BM_GradientSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_GradientBatched)->Arg(64)->Arg(256);
BENCHMARK(BM_PredictSerial)->Arg(256)->Arg(1024);
BENCHMARK(BM_PredictBatched)->Arg(256)->Arg(1024);
BENCHMARK(BM_ForwardSingle)->Arg(1)->Arg(10)->Arg(20)->Arg(40);

BENCHMARK_MAIN();
