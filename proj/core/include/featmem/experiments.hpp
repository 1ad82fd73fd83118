#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "featmem/geo.hpp"
#include "featmem/memory_bank.hpp"
#include "featmem/synthgen.hpp"

namespace featmem {

enum class ExperimentKind { RuntimeVsNm, NkSweep, UpdatePolicy, Diversity, QualityProxy, RunVideo };

/// One flat configuration shared by all experiments; each run_* reads the
/// fields it needs. CLI subcommands and tests pin their own defaults.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::RuntimeVsNm;
  StreamSpec stream{};
  std::vector<std::size_t> grid{};  // swept values (n_m or n_k)
  std::size_t repetitions = 5;      // timed reps; one extra warmup rep runs first
  std::uint64_t seed = 0;
  std::string out_path{};

  std::size_t dim = 256;
  std::size_t heads = 8;
  std::size_t n_mem = 24000;
  std::size_t n_key = 256;
  SamplingStrategy strategy = SamplingStrategy::Random;
  unsigned threads = 1;
  std::size_t mem_budget_mb = 4096;  // concatenation runs above this emit OOM rows
  std::size_t n_queries = 16;

  // quality-proxy knobs
  double alpha = 0.5;
  double qk_gain = 2.0;
  double query_sigma = 0.5;
  std::size_t exemplars_per_class = 100;
};

/// Key-set construction cost across memory sizes, sampled vs. concatenation.
struct RuntimeRow {
  std::string mode;  // "sampling" | "concat"
  std::size_t n_m = 0;
  std::size_t n_k = 0;
  unsigned threads = 1;
  bool oom = false;
  std::uint64_t median_ns = 0;
  std::uint64_t p90_ns = 0;
};
struct RuntimeVsNmResult {
  std::vector<RuntimeRow> rows;
};
RuntimeVsNmResult run_runtime_vs_nm(const ExperimentSpec& spec);
std::string to_csv(const RuntimeVsNmResult& result);

/// Latency and denoising quality across key-set sizes at fixed memory size.
struct NkSweepRow {
  std::size_t n_k = 0;
  std::uint64_t median_ns = 0;
  std::uint64_t p90_ns = 0;
  double raw_cosine = 0.0;
  double enhanced_cosine = 0.0;
};
struct NkSweepResult {
  std::vector<NkSweepRow> rows;
};
NkSweepResult run_nk_sweep(const ExperimentSpec& spec);
std::string to_csv(const NkSweepResult& result);

/// Frame entropy of key sets per sampling strategy on a high-redundancy,
/// frame-correlated-score stream.
struct DiversityRow {
  SamplingStrategy strategy = SamplingStrategy::Random;
  double mean_entropy = 0.0;
  double std_entropy = 0.0;
  std::vector<double> per_trial;  // one entropy per trial, trial order
};
struct DiversityResult {
  std::vector<DiversityRow> rows;
};
DiversityResult run_diversity(const ExperimentSpec& spec);
std::string to_csv(const DiversityResult& result);

/// Distinct source frames over time per update policy and scope, across two
/// consecutive videos (the second video's frame indices continue the first).
struct UpdatePolicySeries {
  UpdatePolicy policy{};
  MemoryScope scope = MemoryScope::VideoWise;
  std::vector<std::uint64_t> frame_t;
  std::vector<std::size_t> distinct_frames;
  std::vector<std::size_t> bank_size;
  std::size_t size_after_boundary_clear = 0;  // bank size right after the video-2 clear()
};
struct UpdatePolicyResult {
  std::vector<UpdatePolicySeries> series;
  std::size_t frames_per_video = 0;
};
UpdatePolicyResult run_update_policy(const ExperimentSpec& spec);
std::string to_csv(const UpdatePolicyResult& result);

/// Shared inputs of the denoising quality evaluation, exposed so oracles can
/// recompute the enhancement independently from the same bank and queries.
struct QualityProxySetup {
  GeoParams params;
  MemoryBank bank;
  EvalSet eval;
  std::vector<FeatureVector> centroids;
};
QualityProxySetup build_quality_proxy_setup(const ExperimentSpec& spec);

/// Nearest-centroid accuracy and mean cosine-to-centroid, raw vs. enhanced.
/// One key set (drawn from a seed-derived rng) serves every query; the drawn
/// key set and the enhanced queries are returned for oracle comparison.
struct QualityProxyResult {
  double raw_accuracy = 0.0;
  double enhanced_accuracy = 0.0;
  double raw_cosine = 0.0;
  double enhanced_cosine = 0.0;
  KeySet key_set;
  std::vector<ScoredFeature> enhanced_queries;
};
QualityProxyResult run_quality_proxy(const ExperimentSpec& spec);
std::string to_csv(const QualityProxyResult& result);

/// Nearest-rank order statistics over timing samples.
std::uint64_t median_ns(std::vector<std::uint64_t> samples);
std::uint64_t p90_ns(std::vector<std::uint64_t> samples);

}  // namespace featmem
