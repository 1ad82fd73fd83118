#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "featmem/error.hpp"

namespace featmem {

enum class FeatureLevel { Pixel, Instance };

std::string_view to_string(FeatureLevel level);
FeatureLevel parse_level(std::string_view s);

/// A d-dimensional feature vector. Validated on construction: non-empty,
/// every entry finite. Immutable once built.
class FeatureVector {
 public:
  explicit FeatureVector(std::vector<double> values);

  const std::vector<double>& values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const double* data() const { return values_.data(); }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<double> values_;
};

/// Free-function form of the FeatureVector constructor.
FeatureVector new_feature(std::vector<double> values);

/// A feature vector tagged with its confidence score, source frame, class
/// label, and enhancement level. Score must lie in [0, 1]; out-of-range
/// scores are rejected rather than clamped so sampling weights stay honest.
struct ScoredFeature {
  ScoredFeature(FeatureVector f, double score_, std::uint64_t frame_index_,
                std::uint32_t class_id_, FeatureLevel level_);

  FeatureVector feature;
  double score;
  std::uint64_t frame_index;
  std::uint32_t class_id;
  FeatureLevel level;
};

/// An ordered selection of memory contents: elements plus the bank slot id
/// each one came from. Producers guarantee source_slots are distinct
/// (sampling is without replacement) and parallel to elements.
struct KeySet {
  std::vector<ScoredFeature> elements;
  std::vector<std::uint64_t> source_slots;

  std::size_t size() const { return elements.size(); }
  bool empty() const { return elements.empty(); }
};

/// Checks the KeySet invariants (parallel arrays, distinct slots, uniform
/// feature dimension). Throws Error on violation.
void validate(const KeySet& keys);

}  // namespace featmem
