// Microbenchmarks for the hot paths: key-set construction per strategy as the
// bank grows, attention enhancement as the key set grows, and batched inserts
// under feature-wise eviction at capacity.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "featmem/geo.hpp"
#include "featmem/memory_bank.hpp"
#include "featmem/rng.hpp"

namespace {

using namespace featmem;

std::vector<ScoredFeature> gaussian_batch(std::size_t count, std::size_t dim,
                                          std::uint64_t frame_index, SeededRng& rng) {
  std::vector<ScoredFeature> batch;
  batch.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> values(dim);
    for (double& v : values) v = rng.next_gaussian();
    batch.emplace_back(FeatureVector(std::move(values)), rng.next_double(), frame_index,
                       static_cast<std::uint32_t>(i % 10), FeatureLevel::Instance);
  }
  return batch;
}

MemoryBank filled_bank(std::size_t size, std::size_t n_k, std::size_t dim,
                       SamplingStrategy strategy, SeededRng& rng) {
  MemoryBankConfig config;
  config.capacity = size;
  config.n_k = n_k;
  config.strategy = strategy;
  MemoryBank bank(config);
  constexpr std::size_t kBatch = 1000;
  std::uint64_t frame = 0;
  std::size_t left = size;
  while (left > 0) {
    const std::size_t take = left < kBatch ? left : kBatch;
    bank.insert_batch(gaussian_batch(take, dim, frame++, rng), rng);
    left -= take;
  }
  return bank;
}

void BM_ConstructKeySet(benchmark::State& state, SamplingStrategy strategy) {
  const auto n_m = static_cast<std::size_t>(state.range(0));
  SeededRng rng(42);
  const MemoryBank bank = filled_bank(n_m, 256, 256, strategy, rng);
  for (auto _ : state) {
    KeySet keys = bank.construct_key_set(rng);
    benchmark::DoNotOptimize(keys.elements.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
}

void BM_EnhanceVsKeySetSize(benchmark::State& state) {
  const auto n_k = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t kDim = 256;
  SeededRng rng(7);
  const MemoryBank bank = filled_bank(n_k, n_k, kDim, SamplingStrategy::Random, rng);
  const GeoParams params = GeoParams::random(kDim, 8, 11);
  const ProjectedKeySet projected(bank.concat_key_set(), params);
  std::vector<double> values(kDim);
  for (double& v : values) v = rng.next_gaussian();
  const FeatureVector query{values};
  for (auto _ : state) {
    FeatureVector out = projected.enhance(query);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
}

void BM_InsertBatchAtCapacity(benchmark::State& state) {
  constexpr std::size_t kDim = 64;
  constexpr std::size_t kBatch = 100;
  SeededRng rng(3);
  MemoryBank bank = filled_bank(static_cast<std::size_t>(state.range(0)), 256, kDim,
                                SamplingStrategy::Random, rng);
  std::uint64_t frame = bank.stats().distinct_frames;
  for (auto _ : state) {
    state.PauseTiming();
    std::vector<ScoredFeature> batch = gaussian_batch(kBatch, kDim, frame++, rng);
    state.ResumeTiming();
    EvictionReport report = bank.insert_batch(batch, rng);
    benchmark::DoNotOptimize(report.count);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * kBatch);
}

BENCHMARK_CAPTURE(BM_ConstructKeySet, random, SamplingStrategy::Random)
    ->Arg(4000)
    ->Arg(16000)
    ->Arg(64000);
BENCHMARK_CAPTURE(BM_ConstructKeySet, score, SamplingStrategy::ScoreRanking)
    ->Arg(4000)
    ->Arg(16000)
    ->Arg(64000);
BENCHMARK_CAPTURE(BM_ConstructKeySet, freq, SamplingStrategy::FrequencyGuided)
    ->Arg(4000)
    ->Arg(16000)
    ->Arg(64000);
BENCHMARK(BM_EnhanceVsKeySetSize)->Arg(32)->Arg(128)->Arg(512)->Arg(2048);
BENCHMARK(BM_InsertBatchAtCapacity)->Arg(4000)->Arg(24000);

}  // namespace

BENCHMARK_MAIN();
