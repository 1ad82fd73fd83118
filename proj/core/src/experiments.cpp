#include "featmem/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "featmem/csv.hpp"
#include "featmem/error.hpp"
#include "featmem/pipeline.hpp"

namespace featmem {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double cosine(const FeatureVector& a, const FeatureVector& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::size_t nearest_centroid(const FeatureVector& q, std::span<const FeatureVector> centroids) {
  std::size_t best = 0;
  double best_cos = cosine(q, centroids[0]);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double cc = cosine(q, centroids[c]);
    if (cc > best_cos) {
      best_cos = cc;
      best = c;
    }
  }
  return best;
}

std::uint64_t elapsed_ns(std::chrono::steady_clock::time_point start) {
  const auto d = std::chrono::steady_clock::now() - start;
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(d).count());
}

void check_common(const ExperimentSpec& spec) {
  if (spec.repetitions == 0) throw Error("repetitions must be at least 1");
}

std::vector<ScoredFeature> gaussian_features(SeededRng& rng, std::size_t count, std::size_t dim,
                                             std::uint64_t frame_index) {
  std::vector<ScoredFeature> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.next_gaussian();
    out.emplace_back(FeatureVector(std::move(v)), rng.next_double(), frame_index,
                     static_cast<std::uint32_t>(i % 16), FeatureLevel::Instance);
  }
  return out;
}

void fill_bank_gaussian(MemoryBank& bank, SeededRng& rng, std::size_t total, std::size_t dim) {
  std::uint64_t frame = 0;
  std::size_t remaining = total;
  while (remaining > 0) {
    const std::size_t batch = std::min<std::size_t>(remaining, 1000);
    bank.insert_batch(gaussian_features(rng, batch, dim, frame), rng);
    remaining -= batch;
    ++frame;
  }
}

/// Bank of clean exemplars: every class centroid repeated once per frame,
/// score 1.0, until the capacity rounded down to whole frames is filled.
MemoryBank make_exemplar_bank(std::span<const FeatureVector> centroids, std::size_t capacity,
                              std::size_t n_k, SamplingStrategy strategy, SeededRng& rng) {
  MemoryBankConfig cfg;
  cfg.capacity = std::max<std::size_t>(1, capacity);
  cfg.n_k = n_k;
  cfg.strategy = strategy;
  cfg.expected_level = FeatureLevel::Instance;
  MemoryBank bank(cfg);
  const std::size_t per_class = capacity / centroids.size();
  for (std::size_t e = 0; e < per_class; ++e) {
    std::vector<ScoredFeature> batch;
    batch.reserve(centroids.size());
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      batch.emplace_back(centroids[c], 1.0, e, static_cast<std::uint32_t>(c),
                         FeatureLevel::Instance);
    }
    bank.insert_batch(batch, rng);
  }
  return bank;
}

}  // namespace

std::uint64_t median_ns(std::vector<std::uint64_t> samples) {
  if (samples.empty()) throw Error("no timing samples");
  std::sort(samples.begin(), samples.end());
  return samples[(samples.size() - 1) / 2];
}

std::uint64_t p90_ns(std::vector<std::uint64_t> samples) {
  if (samples.empty()) throw Error("no timing samples");
  std::sort(samples.begin(), samples.end());
  const std::size_t rank = (9 * samples.size() + 9) / 10;  // ceil(0.9 n), 1-based
  return samples[rank - 1];
}

RuntimeVsNmResult run_runtime_vs_nm(const ExperimentSpec& spec) {
  check_common(spec);
  if (spec.grid.empty()) throw Error("experiment grid must not be empty");

  const std::size_t d = spec.dim;
  const GeoParams params = GeoParams::random(d, spec.heads, derive_seed(spec.seed, 7));
  SeededRng rng(spec.seed);
  const std::vector<ScoredFeature> queries = gaussian_features(rng, spec.n_queries, d, 0);
  const std::uint64_t budget_bytes =
      static_cast<std::uint64_t>(spec.mem_budget_mb) * 1024 * 1024;

  RuntimeVsNmResult result;
  double sink = 0.0;
  for (const std::size_t n_m : spec.grid) {
    MemoryBankConfig cfg;
    cfg.capacity = n_m;
    cfg.n_k = spec.n_key;
    cfg.strategy = spec.strategy;
    MemoryBank bank(cfg);
    fill_bank_gaussian(bank, rng, n_m, d);

    for (const bool concat : {false, true}) {
      RuntimeRow row;
      row.mode = concat ? "concat" : "sampling";
      row.n_m = n_m;
      row.n_k = concat ? n_m : std::min(spec.n_key, n_m);
      row.threads = spec.threads;

      // Peak working set of one rep: key-set copy plus key matrix plus the
      // per-head projections (together ~4x the key bytes) over the bank.
      const std::uint64_t est_bytes =
          8ull * d * (static_cast<std::uint64_t>(n_m) + 4ull * row.n_k);
      if (est_bytes > budget_bytes) {
        row.oom = true;
        result.rows.push_back(std::move(row));
        continue;
      }

      std::vector<std::uint64_t> samples;
      samples.reserve(spec.repetitions);
      for (std::size_t rep = 0; rep <= spec.repetitions; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        const KeySet keys = concat ? bank.concat_key_set() : bank.construct_key_set(rng);
        const ProjectedKeySet projected(keys, params);
        const std::vector<ScoredFeature> out = enhance_each(projected, queries, spec.threads);
        const std::uint64_t dt = elapsed_ns(t0);
        if (rep > 0) samples.push_back(dt);
        sink += out.back().feature[0];
      }
      row.median_ns = median_ns(samples);
      row.p90_ns = p90_ns(samples);
      result.rows.push_back(std::move(row));
    }
  }
  if (!std::isfinite(sink)) throw Error("non-finite enhancement output");
  return result;
}

std::string to_csv(const RuntimeVsNmResult& result) {
  CsvWriter csv({"mode", "n_m", "n_k", "threads", "median_ns", "p90_ns"});
  for (const auto& r : result.rows) {
    csv.add_row({r.mode, std::to_string(r.n_m), std::to_string(r.n_k),
                 std::to_string(r.threads), r.oom ? "OOM" : std::to_string(r.median_ns),
                 r.oom ? "OOM" : std::to_string(r.p90_ns)});
  }
  return csv.str();
}

NkSweepResult run_nk_sweep(const ExperimentSpec& spec) {
  check_common(spec);
  if (spec.grid.empty()) throw Error("experiment grid must not be empty");

  StreamSpec cs;
  cs.d = spec.dim;
  cs.n_classes = spec.stream.n_classes;
  cs.centroid_scale = spec.stream.centroid_scale;
  cs.seed = spec.seed;
  const std::vector<FeatureVector> centroids = make_centroids(cs);
  const EvalSet eval = labeled_eval_set(cs, spec.n_queries, spec.query_sigma);
  const GeoParams params = GeoParams::denoising(spec.dim, spec.heads, spec.qk_gain, spec.alpha);

  double raw_cos = 0.0;
  for (std::size_t i = 0; i < eval.queries.size(); ++i) {
    raw_cos += cosine(eval.queries[i].feature, centroids[eval.labels[i]]);
  }
  raw_cos /= eval.queries.empty() ? 1.0 : static_cast<double>(eval.queries.size());

  SeededRng rng(derive_seed(spec.seed, 4));
  NkSweepResult result;
  double sink = 0.0;
  for (const std::size_t n_k : spec.grid) {
    SeededRng fill_rng(derive_seed(spec.seed, 3));
    MemoryBank bank = make_exemplar_bank(centroids, spec.n_mem, n_k, spec.strategy, fill_rng);

    NkSweepRow row;
    row.n_k = n_k;
    row.raw_cosine = raw_cos;

    std::vector<std::uint64_t> samples;
    samples.reserve(spec.repetitions);
    for (std::size_t rep = 0; rep <= spec.repetitions; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const KeySet keys = bank.construct_key_set(rng);
      const ProjectedKeySet projected(keys, params);
      const std::vector<ScoredFeature> out = enhance_each(projected, eval.queries, spec.threads);
      const std::uint64_t dt = elapsed_ns(t0);
      if (rep > 0) samples.push_back(dt);
      if (rep == 1) {
        double enh = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
          enh += cosine(out[i].feature, centroids[eval.labels[i]]);
        }
        row.enhanced_cosine = enh / (out.empty() ? 1.0 : static_cast<double>(out.size()));
      }
      if (!out.empty()) sink += out.back().feature[0];
    }
    row.median_ns = median_ns(samples);
    row.p90_ns = p90_ns(samples);
    result.rows.push_back(std::move(row));
  }
  if (!std::isfinite(sink)) throw Error("non-finite enhancement output");
  return result;
}

std::string to_csv(const NkSweepResult& result) {
  CsvWriter csv({"n_k", "median_ns", "p90_ns", "raw_cosine", "enhanced_cosine"});
  for (const auto& r : result.rows) {
    csv.add_row({std::to_string(r.n_k), std::to_string(r.median_ns), std::to_string(r.p90_ns),
                 format_double(r.raw_cosine), format_double(r.enhanced_cosine)});
  }
  return csv.str();
}

DiversityResult run_diversity(const ExperimentSpec& spec) {
  check_common(spec);
  const std::size_t trials = spec.repetitions;
  const SamplingStrategy strategies[] = {SamplingStrategy::Random, SamplingStrategy::ScoreRanking,
                                         SamplingStrategy::FrequencyGuided};

  DiversityResult result;
  for (const auto s : strategies) {
    DiversityRow row;
    row.strategy = s;
    row.per_trial.reserve(trials);
    result.rows.push_back(std::move(row));
  }

  for (std::size_t t = 0; t < trials; ++t) {
    StreamSpec stream = spec.stream;
    stream.seed = derive_seed(spec.seed, 2 * t);
    const std::vector<FrameFeatures> frames = generate_stream(stream);
    const std::uint64_t draw_seed = derive_seed(spec.seed, 2 * t + 1);

    for (std::size_t si = 0; si < 3; ++si) {
      MemoryBankConfig cfg;
      cfg.capacity = std::max<std::size_t>(1, stream.n_frames * stream.instance_per_frame);
      cfg.n_k = spec.n_key;
      cfg.strategy = strategies[si];
      cfg.expected_level = FeatureLevel::Instance;
      MemoryBank bank(cfg);
      SeededRng fill_rng(derive_seed(draw_seed, 100));
      for (const auto& frame : frames) bank.insert_batch(frame.instance_features, fill_rng);

      SeededRng draw_rng(derive_seed(draw_seed, si));
      const KeySet keys = bank.construct_key_set(draw_rng);
      result.rows[si].per_trial.push_back(frame_entropy(keys));
    }
  }

  for (auto& row : result.rows) {
    const auto n = static_cast<double>(row.per_trial.size());
    double mean = 0.0;
    for (double e : row.per_trial) mean += e;
    mean /= n;
    double var = 0.0;
    for (double e : row.per_trial) var += (e - mean) * (e - mean);
    row.mean_entropy = mean;
    row.std_entropy = row.per_trial.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  }
  return result;
}

std::string to_csv(const DiversityResult& result) {
  CsvWriter csv({"strategy", "mean_entropy", "std"});
  for (const auto& r : result.rows) {
    csv.add_row({to_string(r.strategy), format_double(r.mean_entropy),
                 format_double(r.std_entropy)});
  }
  return csv.str();
}

UpdatePolicyResult run_update_policy(const ExperimentSpec& spec) {
  check_common(spec);
  const std::size_t t_per_video = spec.stream.n_frames;

  StreamSpec s1 = spec.stream;
  s1.seed = derive_seed(spec.seed, 10);
  StreamSpec s2 = spec.stream;
  s2.seed = derive_seed(spec.seed, 11);
  std::vector<FrameFeatures> video1 = generate_stream(s1);
  std::vector<FrameFeatures> video2 = generate_stream(s2);
  for (auto& frame : video2) {
    frame.frame_index += t_per_video;
    for (auto& sf : frame.pixel_features) sf.frame_index += t_per_video;
    for (auto& sf : frame.instance_features) sf.frame_index += t_per_video;
  }

  const UpdatePolicy policies[] = {UpdatePolicy::frame_wise(),
                                   UpdatePolicy::feature_wise(SamplingStrategy::Random)};
  const MemoryScope scopes[] = {MemoryScope::VideoWise, MemoryScope::ClassWise};

  UpdatePolicyResult result;
  result.frames_per_video = t_per_video;
  std::size_t combo = 0;
  for (const auto& policy : policies) {
    for (const auto scope : scopes) {
      UpdatePolicySeries series;
      series.policy = policy;
      series.scope = scope;

      MemoryBankConfig cfg;
      cfg.capacity = spec.n_mem;
      cfg.n_k = spec.n_key;
      cfg.strategy = spec.strategy;
      cfg.update_policy = policy;
      cfg.scope = scope;
      cfg.expected_level = FeatureLevel::Instance;
      MemoryBank bank(cfg);
      SeededRng rng(derive_seed(spec.seed, 12 + combo));

      for (int video = 0; video < 2; ++video) {
        const auto& frames = video == 0 ? video1 : video2;
        if (video == 1) {
          bank.clear();
          series.size_after_boundary_clear = bank.stats().size;
        }
        for (const auto& frame : frames) {
          bank.insert_batch(frame.instance_features, rng);
          const BankStats st = bank.stats();
          series.frame_t.push_back(frame.frame_index);
          series.distinct_frames.push_back(st.distinct_frames);
          series.bank_size.push_back(st.size);
        }
      }
      result.series.push_back(std::move(series));
      ++combo;
    }
  }
  return result;
}

std::string to_csv(const UpdatePolicyResult& result) {
  CsvWriter csv({"policy", "scope", "frame_t", "distinct_frames"});
  for (const auto& s : result.series) {
    for (std::size_t i = 0; i < s.frame_t.size(); ++i) {
      csv.add_row({to_string(s.policy), to_string(s.scope), std::to_string(s.frame_t[i]),
                   std::to_string(s.distinct_frames[i])});
    }
  }
  return csv.str();
}

QualityProxySetup build_quality_proxy_setup(const ExperimentSpec& spec) {
  StreamSpec cs;
  cs.d = spec.dim;
  cs.n_classes = spec.stream.n_classes;
  cs.centroid_scale = spec.stream.centroid_scale;
  cs.seed = spec.seed;
  std::vector<FeatureVector> centroids = make_centroids(cs);
  GeoParams params = GeoParams::denoising(spec.dim, spec.heads, spec.qk_gain, spec.alpha);
  SeededRng fill_rng(derive_seed(spec.seed, 3));
  MemoryBank bank = make_exemplar_bank(centroids, cs.n_classes * spec.exemplars_per_class,
                                       spec.n_key, spec.strategy, fill_rng);
  EvalSet eval = labeled_eval_set(cs, spec.n_queries, spec.query_sigma);
  return {std::move(params), std::move(bank), std::move(eval), std::move(centroids)};
}

QualityProxyResult run_quality_proxy(const ExperimentSpec& spec) {
  const QualityProxySetup setup = build_quality_proxy_setup(spec);
  SeededRng rng(derive_seed(spec.seed, 4));
  KeySet keys = setup.bank.construct_key_set(rng);
  const ProjectedKeySet projected(keys, setup.params);
  std::vector<ScoredFeature> enhanced = enhance_each(projected, setup.eval.queries, spec.threads);

  QualityProxyResult result;
  const std::size_t n = setup.eval.queries.size();
  if (n > 0) {
    std::size_t raw_hits = 0, enh_hits = 0;
    double raw_cos = 0.0, enh_cos = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto label = setup.eval.labels[i];
      raw_cos += cosine(setup.eval.queries[i].feature, setup.centroids[label]);
      enh_cos += cosine(enhanced[i].feature, setup.centroids[label]);
      if (nearest_centroid(setup.eval.queries[i].feature, setup.centroids) == label) ++raw_hits;
      if (nearest_centroid(enhanced[i].feature, setup.centroids) == label) ++enh_hits;
    }
    result.raw_accuracy = static_cast<double>(raw_hits) / static_cast<double>(n);
    result.enhanced_accuracy = static_cast<double>(enh_hits) / static_cast<double>(n);
    result.raw_cosine = raw_cos / static_cast<double>(n);
    result.enhanced_cosine = enh_cos / static_cast<double>(n);
  }
  result.key_set = std::move(keys);
  result.enhanced_queries = std::move(enhanced);
  return result;
}

std::string to_csv(const QualityProxyResult& result) {
  CsvWriter csv({"metric", "raw", "enhanced"});
  csv.add_row({"accuracy", format_double(result.raw_accuracy),
               format_double(result.enhanced_accuracy)});
  csv.add_row({"mean_cosine", format_double(result.raw_cosine),
               format_double(result.enhanced_cosine)});
  return csv.str();
}

}  // namespace featmem
