#include "featmem/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>

#include "featmem/error.hpp"

namespace featmem {

namespace {

void check_members(std::span<const ScoredFeature> members, std::uint64_t frame_index,
                   FeatureLevel level) {
  for (const auto& sf : members) {
    if (sf.frame_index != frame_index) {
      std::ostringstream os;
      os << "frame features: member carries frame_index " << sf.frame_index << ", expected "
         << frame_index;
      throw Error(os.str());
    }
    if (sf.level != level) {
      throw Error("frame features: " + std::string(to_string(level)) + " container holds a " +
                  std::string(to_string(sf.level)) + "-level feature");
    }
  }
}

std::uint64_t elapsed_ns(std::chrono::steady_clock::time_point start) {
  const auto d = std::chrono::steady_clock::now() - start;
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(d).count());
}

}  // namespace

void validate(const FrameFeatures& frame) {
  check_members(frame.pixel_features, frame.frame_index, FeatureLevel::Pixel);
  check_members(frame.instance_features, frame.frame_index, FeatureLevel::Instance);
}

std::vector<ScoredFeature> enhance_via_mem_bank(std::span<const ScoredFeature> q_set,
                                                const MemoryBank& bank, const GeoParams& params,
                                                std::size_t depth, SeededRng& rng,
                                                unsigned threads) {
  if (depth == 0) return {q_set.begin(), q_set.end()};
  const KeySet keys = bank.construct_key_set(rng);
  const ProjectedKeySet projected(keys, params);
  return enhance_each_stacked(projected, q_set, GeoConfig{depth}, threads);
}

void update_banks(MemoryBank& pixel_bank, MemoryBank& instance_bank, const FrameFeatures& enhanced,
                  const PipelineConfig& config, SeededRng& rng) {
  validate(enhanced);

  const std::size_t n_pix = enhanced.pixel_features.size();
  const std::size_t take_pix = std::min(config.u_pix, n_pix);
  if (take_pix > 0) {
    const std::vector<std::size_t> picks = sample_indices(rng, n_pix, take_pix);
    std::vector<ScoredFeature> batch;
    batch.reserve(take_pix);
    for (std::size_t i : picks) batch.push_back(enhanced.pixel_features[i]);
    pixel_bank.insert_batch(batch, rng);
  }

  const std::size_t n_ins = enhanced.instance_features.size();
  const std::size_t take_ins = std::min(config.u_ins, n_ins);
  if (take_ins > 0) {
    std::vector<std::size_t> order(n_ins);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return enhanced.instance_features[a].score > enhanced.instance_features[b].score;
    });
    std::vector<ScoredFeature> batch;
    batch.reserve(take_ins);
    for (std::size_t i = 0; i < take_ins; ++i) {
      batch.push_back(enhanced.instance_features[order[i]]);
    }
    instance_bank.insert_batch(batch, rng);
  }
}

std::vector<FrameResult> run_video(std::span<const FrameFeatures> frames,
                                   const PipelineConfig& config, MemoryBank& pixel_bank,
                                   MemoryBank& instance_bank, SeededRng& rng) {
  if (frames.empty()) throw Error("run_video requires at least one frame");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    validate(frames[i]);
    if (i > 0 && frames[i].frame_index <= frames[i - 1].frame_index) {
      throw Error("frame indices must be strictly increasing");
    }
  }

  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (config.offline_test) rng.shuffle(order);

  std::vector<FrameResult> results;
  results.reserve(frames.size());
  for (std::size_t idx : order) {
    const FrameFeatures& frame = frames[idx];
    FrameResult res;
    res.frame_index = frame.frame_index;

    auto enhance_level = [&](std::span<const ScoredFeature> queries, const MemoryBank& bank,
                             const GeoParams& params, std::size_t depth,
                             std::size_t& keyset_size) {
      if (depth == 0) return std::vector<ScoredFeature>(queries.begin(), queries.end());
      const KeySet keys = bank.construct_key_set(rng);
      keyset_size = keys.size();
      const ProjectedKeySet projected(keys, params);
      return enhance_each_stacked(projected, queries, GeoConfig{depth}, config.threads);
    };

    auto t0 = std::chrono::steady_clock::now();
    std::vector<ScoredFeature> pixel = enhance_level(
        frame.pixel_features, pixel_bank, config.pixel_params, config.n_pix,
        res.pixel_keyset_size);
    res.pixel_enhance_ns = elapsed_ns(t0);

    t0 = std::chrono::steady_clock::now();
    std::vector<ScoredFeature> instance = enhance_level(
        frame.instance_features, instance_bank, config.instance_params, config.n_ins,
        res.instance_keyset_size);
    res.instance_enhance_ns = elapsed_ns(t0);

    FrameFeatures enhanced{frame.frame_index, std::move(pixel), std::move(instance)};
    t0 = std::chrono::steady_clock::now();
    update_banks(pixel_bank, instance_bank, enhanced, config, rng);
    res.update_ns = elapsed_ns(t0);

    const BankStats ps = pixel_bank.stats();
    const BankStats is = instance_bank.stats();
    res.pixel_bank_size = ps.size;
    res.pixel_distinct_frames = ps.distinct_frames;
    res.instance_bank_size = is.size;
    res.instance_distinct_frames = is.distinct_frames;
    res.enhanced_instance_features = std::move(enhanced.instance_features);
    results.push_back(std::move(res));
  }
  return results;
}

std::vector<FrameResult> run_video(std::span<const FrameFeatures> frames,
                                   const PipelineConfig& config) {
  MemoryBankConfig pix_cfg = config.pixel_bank;
  pix_cfg.expected_level = FeatureLevel::Pixel;
  MemoryBankConfig ins_cfg = config.instance_bank;
  ins_cfg.expected_level = FeatureLevel::Instance;
  MemoryBank pixel_bank(pix_cfg);
  MemoryBank instance_bank(ins_cfg);
  SeededRng rng(config.seed);
  return run_video(frames, config, pixel_bank, instance_bank, rng);
}

}  // namespace featmem
