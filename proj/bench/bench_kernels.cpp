// Serial vs OpenMP block-sparse kernel, and dense vs sparse pipeline.
//
//   ./bench_kernels --benchmark_filter=Sparse
//   RECTATTN_THREADS=4 ./bench_kernels

#include <benchmark/benchmark.h>

#include <map>

#include "rectattn/kernel.hpp"
#include "rectattn/rectify.hpp"
#include "rectattn/synthetic.hpp"

using namespace rectattn;

namespace {

struct Fixture {
  AttentionProblem<float> problem;
  BlockGrid grid;
  SparseMask mask;
};

const Fixture& fixture(std::size_t tv)
{
  static std::map<std::size_t, Fixture> cache;
  auto it = cache.find(tv);
  if (it != cache.end()) return it->second;
  SyntheticSpec spec;
  spec.t_video = tv;
  spec.t_text = 64;
  spec.dim = 64;
  spec.block = 64;
  spec.grid = {1, tv / 64, 64};
  Fixture f;
  f.problem = gen_synthetic_as<float>(spec);
  f.grid = partition(f.problem);
  const auto pooled = pool_problem(f.problem, f.grid);
  const auto implicit = implicit_full_attention(f.problem, pooled, f.grid);
  SparsityConfig config;
  config.top_k_fraction = 0.1;
  config.weight_threshold = 0.0;
  f.mask = build_sparse_mask(implicit.a_pool, config, f.grid);
  return cache.emplace(tv, std::move(f)).first->second;
}

void BM_SparseSerial(benchmark::State& state)
{
  const auto& f = fixture(std::size_t(state.range(0)));
  for (auto _ : state) {
    auto r = block_sparse_attention_serial(f.problem.q_video, f.problem.k, f.problem.v,
                                           f.mask.mask, f.grid);
    benchmark::DoNotOptimize(r.output.values().data());
  }
}

void BM_SparseOpenMP(benchmark::State& state)
{
  const auto& f = fixture(std::size_t(state.range(0)));
  for (auto _ : state) {
    auto r = block_sparse_attention(f.problem.q_video, f.problem.k, f.problem.v, f.mask.mask,
                                    f.grid);
    benchmark::DoNotOptimize(r.output.values().data());
  }
}

void BM_DenseSerial(benchmark::State& state)
{
  const auto& f = fixture(std::size_t(state.range(0)));
  for (auto _ : state) {
    auto r = dense_attention_serial(f.problem.q_video, f.problem.k, f.problem.v, 64);
    benchmark::DoNotOptimize(r.output.values().data());
  }
}

void BM_DenseOpenMP(benchmark::State& state)
{
  const auto& f = fixture(std::size_t(state.range(0)));
  for (auto _ : state) {
    auto r = dense_attention(f.problem.q_video, f.problem.k, f.problem.v, 64);
    benchmark::DoNotOptimize(r.output.values().data());
  }
}

void BM_RectifiedPipeline(benchmark::State& state)
{
  const auto& f = fixture(std::size_t(state.range(0)));
  SparsityConfig config;
  config.top_k_fraction = 0.1;
  config.weight_threshold = 0.0;
  for (auto _ : state) {
    auto r = rectified_attention_pipeline(f.problem, config);
    benchmark::DoNotOptimize(r.output.o_video.values().data());
  }
}

}  // namespace

BENCHMARK(BM_SparseSerial)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SparseOpenMP)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DenseSerial)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DenseOpenMP)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RectifiedPipeline)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
