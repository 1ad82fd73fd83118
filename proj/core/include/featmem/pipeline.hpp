#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "featmem/feature.hpp"
#include "featmem/geo.hpp"
#include "featmem/memory_bank.hpp"
#include "featmem/rng.hpp"

namespace featmem {

/// One frame's features at both levels. Every member carries the frame's
/// index and the level tag matching its container.
struct FrameFeatures {
  std::uint64_t frame_index = 0;
  std::vector<ScoredFeature> pixel_features;
  std::vector<ScoredFeature> instance_features;
};

void validate(const FrameFeatures& frame);

/// Per-frame driver settings. Enhancement depths of 0 disable that level's
/// enhancement (no key set is drawn); update counts of 0 disable insertion.
struct PipelineConfig {
  GeoParams pixel_params;
  GeoParams instance_params;
  MemoryBankConfig pixel_bank{};
  MemoryBankConfig instance_bank{};
  std::size_t n_pix = 1;       // pixel-level enhancement depth
  std::size_t n_ins = 2;       // instance-level enhancement depth
  bool offline_test = false;   // process frames in seeded shuffled order
  std::size_t u_pix = 100;     // pixel features inserted per frame (random)
  std::size_t u_ins = 75;      // instance features inserted per frame (top by score)
  std::uint64_t seed = 0;
  unsigned threads = 1;        // per-frame query parallelism
};

/// Per-frame outcome. Bank columns report the post-update state.
struct FrameResult {
  std::uint64_t frame_index = 0;
  std::vector<ScoredFeature> enhanced_instance_features;
  std::uint64_t pixel_enhance_ns = 0;
  std::uint64_t instance_enhance_ns = 0;
  std::uint64_t update_ns = 0;
  std::size_t pixel_keyset_size = 0;
  std::size_t instance_keyset_size = 0;
  std::size_t pixel_bank_size = 0;
  std::size_t instance_bank_size = 0;
  std::size_t pixel_distinct_frames = 0;
  std::size_t instance_distinct_frames = 0;
};

/// Draws one key set from the bank, then applies the recursive enhancement
/// stack at the given depth to every query. Depth 0 returns the input
/// unchanged without consuming rng draws. Scores and metadata are preserved.
std::vector<ScoredFeature> enhance_via_mem_bank(std::span<const ScoredFeature> q_set,
                                                const MemoryBank& bank, const GeoParams& params,
                                                std::size_t depth, SeededRng& rng,
                                                unsigned threads = 1);

/// Inserts the frame's enhanced features: the top-u_ins instance features by
/// score (descending, input order on ties) and u_pix uniformly chosen pixel
/// features. Draw order: pixel selection, pixel insertion, instance
/// insertion.
void update_banks(MemoryBank& pixel_bank, MemoryBank& instance_bank, const FrameFeatures& enhanced,
                  const PipelineConfig& config, SeededRng& rng);

/// Per-frame loop over one video: optional seeded shuffle of the processing
/// order, pixel enhancement, instance enhancement, then bank updates.
/// Constructs both banks internally (pinning their expected level) and a
/// fresh rng from config.seed. Results are in processed order.
std::vector<FrameResult> run_video(std::span<const FrameFeatures> frames,
                                   const PipelineConfig& config);

/// run_video against caller-owned banks and rng, so bank contents can
/// persist across videos (class-wise scope).
std::vector<FrameResult> run_video(std::span<const FrameFeatures> frames,
                                   const PipelineConfig& config, MemoryBank& pixel_bank,
                                   MemoryBank& instance_bank, SeededRng& rng);

}  // namespace featmem
