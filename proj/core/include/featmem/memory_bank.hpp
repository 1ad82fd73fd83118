#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "featmem/feature.hpp"
#include "featmem/rng.hpp"

namespace featmem {

/// How key sets are drawn from the bank, and how feature-wise eviction picks
/// its victims (eviction inverts the score preference).
enum class SamplingStrategy { Random, ScoreRanking, FrequencyGuided };

/// FrameWise evicts every feature of the oldest frame present; FeatureWise
/// evicts exactly the overflow count of individual features chosen by its
/// strategy over the whole bank, newly inserted features included.
struct UpdatePolicy {
  enum class Kind { FeatureWise, FrameWise };

  Kind kind = Kind::FeatureWise;
  SamplingStrategy strategy = SamplingStrategy::Random;  // used by FeatureWise only

  static UpdatePolicy feature_wise(SamplingStrategy strategy) {
    return {Kind::FeatureWise, strategy};
  }
  static UpdatePolicy frame_wise() { return {Kind::FrameWise, SamplingStrategy::Random}; }

  friend bool operator==(const UpdatePolicy& a, const UpdatePolicy& b) {
    if (a.kind != b.kind) return false;
    return a.kind == Kind::FrameWise || a.strategy == b.strategy;
  }
};

/// VideoWise banks are emptied by clear() at video boundaries; ClassWise
/// banks persist across videos (clear() is a no-op).
enum class MemoryScope { VideoWise, ClassWise };

std::string to_string(SamplingStrategy strategy);   // "random" | "score" | "freq"
SamplingStrategy parse_strategy(const std::string& text);
std::string to_string(const UpdatePolicy& policy);  // "frame" | "feature-<strategy>"
UpdatePolicy parse_update_policy(const std::string& text);
std::string to_string(MemoryScope scope);           // "video" | "class"
MemoryScope parse_scope(const std::string& text);

struct MemoryBankConfig {
  std::size_t capacity = 24000;  // max stored features
  std::size_t n_k = 2000;        // key-set size (0 disables key sets)
  SamplingStrategy strategy = SamplingStrategy::Random;
  UpdatePolicy update_policy{};
  MemoryScope scope = MemoryScope::VideoWise;
  /// When set, every inserted feature must carry this level.
  std::optional<FeatureLevel> expected_level;
};

struct EvictionReport {
  std::size_t count = 0;
  std::vector<std::uint64_t> slots;  // evicted slot ids, ascending
};

struct BankStats {
  std::size_t size = 0;
  std::size_t distinct_frames = 0;
  double frame_entropy = 0.0;  // Shannon entropy (nats) of the frame distribution
  std::vector<std::size_t> score_histogram;  // 10 equal bins over [0, 1]
};

/// Shannon entropy in nats of the frame_index distribution of a key set.
double frame_entropy(const KeySet& keys);

/// Bounded store of scored features with stable slot ids. Sampling methods
/// are read-only; insert_batch and clear require exclusive access.
class MemoryBank {
 public:
  explicit MemoryBank(MemoryBankConfig config);

  [[nodiscard]] const MemoryBankConfig& config() const { return config_; }
  [[nodiscard]] std::size_t size() const { return slots_.size(); }

  /// Stores the batch (one shared frame_index), then evicts the overflow per
  /// the update policy. Rejects batches larger than the capacity, mixed frame
  /// indices, level mismatches, and dimension mismatches.
  EvictionReport insert_batch(std::span<const ScoredFeature> features, SeededRng& rng);

  /// Draws min(n_k, available) distinct features per the sampling strategy.
  /// A class filter restricts the candidate slots to one class_id. Consumes
  /// rng draws only when both the candidate set and n_k are non-empty.
  [[nodiscard]] KeySet construct_key_set(SeededRng& rng,
                                         std::optional<std::uint32_t> class_filter =
                                             std::nullopt) const;

  /// Every stored feature, in slot-id order.
  [[nodiscard]] KeySet concat_key_set() const;

  /// Empties the bank under VideoWise scope; no-op under ClassWise.
  void clear();

  [[nodiscard]] BankStats stats() const;

  /// JSONL snapshot: a header line {capacity, n_k, strategy, update_policy,
  /// scope}, then one record per slot in slot order {slot_id, frame_index,
  /// class_id, score, level, feature}. The expected_level pin is not part of
  /// the format. Loading reproduces identical key sets for identical seeds.
  void save_snapshot(const std::string& path) const;
  static MemoryBank load_snapshot(const std::string& path);

 private:
  struct Slot {
    std::uint64_t id;
    ScoredFeature feature;
  };

  [[nodiscard]] KeySet make_key_set(std::span<const std::size_t> picks) const;
  std::vector<std::size_t> pick_victims(std::size_t overflow, SeededRng& rng) const;

  MemoryBankConfig config_;
  std::vector<Slot> slots_;  // ascending by id
  std::uint64_t next_id_ = 0;
};

}  // namespace featmem
