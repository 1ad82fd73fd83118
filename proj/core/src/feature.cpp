#include "featmem/feature.hpp"

#include <cmath>
#include <unordered_set>

namespace featmem {

std::string_view to_string(FeatureLevel level) {
  return level == FeatureLevel::Pixel ? "pixel" : "instance";
}

FeatureLevel parse_level(std::string_view s) {
  if (s == "pixel") return FeatureLevel::Pixel;
  if (s == "instance") return FeatureLevel::Instance;
  throw Error("unknown feature level: " + std::string(s));
}

FeatureVector::FeatureVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error("feature vector must not be empty");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error("feature vector has non-finite value at index " + std::to_string(i));
    }
  }
}

FeatureVector new_feature(std::vector<double> values) { return FeatureVector(std::move(values)); }

ScoredFeature::ScoredFeature(FeatureVector f, double score_, std::uint64_t frame_index_,
                             std::uint32_t class_id_, FeatureLevel level_)
    : feature(std::move(f)),
      score(score_),
      frame_index(frame_index_),
      class_id(class_id_),
      level(level_) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw Error("score outside [0, 1]: " + std::to_string(score));
  }
}

void validate(const KeySet& keys) {
  if (keys.elements.size() != keys.source_slots.size()) {
    throw Error("key set: elements and source_slots differ in length");
  }
  std::unordered_set<std::uint64_t> seen;
  for (auto slot : keys.source_slots) {
    if (!seen.insert(slot).second) {
      throw Error("key set: duplicate source slot " + std::to_string(slot));
    }
  }
  if (!keys.elements.empty()) {
    std::size_t d = keys.elements.front().feature.dim();
    for (const auto& e : keys.elements) {
      if (e.feature.dim() != d) throw Error("key set: mixed feature dimensions");
    }
  }
}

}  // namespace featmem
