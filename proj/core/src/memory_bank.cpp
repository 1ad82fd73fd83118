#include "featmem/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "featmem/error.hpp"
#include "featmem/math.hpp"

namespace featmem {

using nlohmann::json;

std::string to_string(SamplingStrategy strategy) {
  switch (strategy) {
    case SamplingStrategy::Random: return "random";
    case SamplingStrategy::ScoreRanking: return "score";
    case SamplingStrategy::FrequencyGuided: return "freq";
  }
  throw Error("invalid sampling strategy value");
}

SamplingStrategy parse_strategy(const std::string& text) {
  if (text == "random") return SamplingStrategy::Random;
  if (text == "score") return SamplingStrategy::ScoreRanking;
  if (text == "freq") return SamplingStrategy::FrequencyGuided;
  throw Error("unknown sampling strategy: " + text);
}

std::string to_string(const UpdatePolicy& policy) {
  if (policy.kind == UpdatePolicy::Kind::FrameWise) return "frame";
  return "feature-" + to_string(policy.strategy);
}

UpdatePolicy parse_update_policy(const std::string& text) {
  if (text == "frame") return UpdatePolicy::frame_wise();
  const std::string prefix = "feature-";
  if (text.rfind(prefix, 0) == 0) {
    return UpdatePolicy::feature_wise(parse_strategy(text.substr(prefix.size())));
  }
  throw Error("unknown update policy: " + text);
}

std::string to_string(MemoryScope scope) {
  return scope == MemoryScope::VideoWise ? "video" : "class";
}

MemoryScope parse_scope(const std::string& text) {
  if (text == "video") return MemoryScope::VideoWise;
  if (text == "class") return MemoryScope::ClassWise;
  throw Error("unknown memory scope: " + text);
}

double frame_entropy(const KeySet& keys) {
  std::map<std::uint64_t, std::size_t> counts;
  for (const auto& e : keys.elements) ++counts[e.frame_index];
  std::vector<std::size_t> c;
  c.reserve(counts.size());
  for (const auto& [frame, n] : counts) c.push_back(n);
  return entropy_nats(c);
}

MemoryBank::MemoryBank(MemoryBankConfig config) : config_(std::move(config)) {
  if (config_.capacity == 0) throw Error("capacity must be positive");
}

EvictionReport MemoryBank::insert_batch(std::span<const ScoredFeature> features, SeededRng& rng) {
  if (features.empty()) return {};
  if (features.size() > config_.capacity) {
    std::ostringstream os;
    os << "batch of size " << features.size() << " exceeds capacity " << config_.capacity;
    throw Error(os.str());
  }
  const std::uint64_t frame = features.front().frame_index;
  const std::size_t dim =
      slots_.empty() ? features.front().feature.dim() : slots_.front().feature.feature.dim();
  for (const auto& f : features) {
    if (f.frame_index != frame) throw Error("mixed frame indices in batch");
    if (config_.expected_level && f.level != *config_.expected_level) {
      throw Error("feature level mismatch: bank expects " +
                  std::string(to_string(*config_.expected_level)) + ", got " +
                  std::string(to_string(f.level)));
    }
    if (f.feature.dim() != dim) {
      std::ostringstream os;
      os << "feature dimension " << f.feature.dim() << " does not match expected dimension "
         << dim;
      throw Error(os.str());
    }
  }

  slots_.reserve(slots_.size() + features.size());
  for (const auto& f : features) slots_.push_back({next_id_++, f});

  EvictionReport report;
  if (slots_.size() > config_.capacity) {
    std::vector<std::size_t> victims = pick_victims(slots_.size() - config_.capacity, rng);
    std::vector<char> dead(slots_.size(), 0);
    report.slots.reserve(victims.size());
    for (std::size_t idx : victims) {
      dead[idx] = 1;
      report.slots.push_back(slots_[idx].id);
    }
    std::vector<Slot> kept;
    kept.reserve(slots_.size() - victims.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (!dead[i]) kept.push_back(std::move(slots_[i]));
    }
    slots_ = std::move(kept);
    std::sort(report.slots.begin(), report.slots.end());
    report.count = report.slots.size();
  }
  return report;
}

std::vector<std::size_t> MemoryBank::pick_victims(std::size_t overflow, SeededRng& rng) const {
  const auto& policy = config_.update_policy;
  if (policy.kind == UpdatePolicy::Kind::FrameWise) {
    std::map<std::uint64_t, std::vector<std::size_t>> by_frame;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      by_frame[slots_[i].feature.frame_index].push_back(i);
    }
    std::vector<std::size_t> victims;
    for (const auto& [frame, indices] : by_frame) {
      if (slots_.size() - victims.size() <= config_.capacity) break;
      victims.insert(victims.end(), indices.begin(), indices.end());
    }
    return victims;
  }

  switch (policy.strategy) {
    case SamplingStrategy::Random:
      return sample_indices(rng, slots_.size(), overflow);
    case SamplingStrategy::ScoreRanking: {
      // Evict the least confident features: lowest score, then oldest frame,
      // then lowest slot id.
      std::vector<std::size_t> order(slots_.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(overflow),
                        order.end(), [&](std::size_t a, std::size_t b) {
                          const auto& fa = slots_[a].feature;
                          const auto& fb = slots_[b].feature;
                          if (fa.score != fb.score) return fa.score < fb.score;
                          if (fa.frame_index != fb.frame_index) {
                            return fa.frame_index < fb.frame_index;
                          }
                          return slots_[a].id < slots_[b].id;
                        });
      order.resize(overflow);
      return order;
    }
    case SamplingStrategy::FrequencyGuided: {
      // Inclusion probability decreasing in score: weights softmax(-score),
      // ranked by exponential keys (one uniform draw per slot in slot order).
      std::vector<double> neg(slots_.size());
      for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -slots_[i].feature.score;
      const std::vector<double> p = softmax(neg);
      std::vector<std::pair<double, std::size_t>> keyed(slots_.size());
      for (std::size_t i = 0; i < slots_.size(); ++i) {
        const double u = 1.0 - rng.next_double();  // in (0, 1]
        keyed[i] = {-std::log(u) / p[i], i};
      }
      std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(overflow),
                        keyed.end(), [&](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first < b.first;
                          return slots_[a.second].id < slots_[b.second].id;
                        });
      std::vector<std::size_t> victims(overflow);
      for (std::size_t i = 0; i < overflow; ++i) victims[i] = keyed[i].second;
      return victims;
    }
  }
  throw Error("invalid update policy value");
}

KeySet MemoryBank::construct_key_set(SeededRng& rng,
                                     std::optional<std::uint32_t> class_filter) const {
  std::vector<std::size_t> cands;
  cands.reserve(slots_.size());
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (!class_filter || slots_[i].feature.class_id == *class_filter) cands.push_back(i);
  }
  const std::size_t k = std::min(config_.n_k, cands.size());
  if (k == 0) return {};

  std::vector<std::size_t> picks;
  switch (config_.strategy) {
    case SamplingStrategy::Random: {
      const std::vector<std::size_t> pos = sample_indices(rng, cands.size(), k);
      picks.reserve(k);
      for (std::size_t p : pos) picks.push_back(cands[p]);
      break;
    }
    case SamplingStrategy::ScoreRanking: {
      // Highest score first; ties broken by recency (higher frame_index),
      // then higher slot id.
      picks = cands;
      std::partial_sort(picks.begin(), picks.begin() + static_cast<std::ptrdiff_t>(k),
                        picks.end(), [&](std::size_t a, std::size_t b) {
                          const auto& fa = slots_[a].feature;
                          const auto& fb = slots_[b].feature;
                          if (fa.score != fb.score) return fa.score > fb.score;
                          if (fa.frame_index != fb.frame_index) {
                            return fa.frame_index > fb.frame_index;
                          }
                          return slots_[a].id > slots_[b].id;
                        });
      picks.resize(k);
      break;
    }
    case SamplingStrategy::FrequencyGuided: {
      // Weighted sampling without replacement via exponential keys: weight
      // softmax(score), rank by -ln(u)/w, keep the k smallest.
      std::vector<double> scores(cands.size());
      for (std::size_t i = 0; i < cands.size(); ++i) scores[i] = slots_[cands[i]].feature.score;
      const std::vector<double> p = softmax(scores);
      std::vector<std::pair<double, std::size_t>> keyed(cands.size());
      for (std::size_t i = 0; i < cands.size(); ++i) {
        const double u = 1.0 - rng.next_double();  // in (0, 1]
        keyed[i] = {-std::log(u) / p[i], cands[i]};
      }
      std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(k),
                        keyed.end(), [&](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first < b.first;
                          return slots_[a.second].id < slots_[b.second].id;
                        });
      picks.reserve(k);
      for (std::size_t i = 0; i < k; ++i) picks.push_back(keyed[i].second);
      break;
    }
  }
  return make_key_set(picks);
}

KeySet MemoryBank::concat_key_set() const {
  std::vector<std::size_t> all(slots_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_key_set(all);
}

KeySet MemoryBank::make_key_set(std::span<const std::size_t> picks) const {
  KeySet ks;
  ks.elements.reserve(picks.size());
  ks.source_slots.reserve(picks.size());
  for (std::size_t idx : picks) {
    ks.elements.push_back(slots_[idx].feature);
    ks.source_slots.push_back(slots_[idx].id);
  }
  return ks;
}

void MemoryBank::clear() {
  if (config_.scope == MemoryScope::ClassWise) return;
  slots_.clear();
}

BankStats MemoryBank::stats() const {
  BankStats s;
  s.size = slots_.size();
  std::map<std::uint64_t, std::size_t> counts;
  for (const auto& slot : slots_) ++counts[slot.feature.frame_index];
  s.distinct_frames = counts.size();
  std::vector<std::size_t> c;
  c.reserve(counts.size());
  for (const auto& [frame, n] : counts) c.push_back(n);
  s.frame_entropy = entropy_nats(c);
  s.score_histogram.assign(10, 0);
  for (const auto& slot : slots_) {
    const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(slot.feature.score * 10.0));
    ++s.score_histogram[bin];
  }
  return s;
}

void MemoryBank::save_snapshot(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open file for writing: " + path);
  const json header = {{"capacity", config_.capacity},
                       {"n_k", config_.n_k},
                       {"strategy", to_string(config_.strategy)},
                       {"update_policy", to_string(config_.update_policy)},
                       {"scope", to_string(config_.scope)}};
  f << header.dump() << '\n';
  for (const auto& slot : slots_) {
    const auto& sf = slot.feature;
    const json rec = {{"slot_id", slot.id},         {"frame_index", sf.frame_index},
                      {"class_id", sf.class_id},    {"score", sf.score},
                      {"level", to_string(sf.level)}, {"feature", sf.feature.values()}};
    f << rec.dump() << '\n';
  }
  if (!f) throw Error("failed writing file: " + path);
}

MemoryBank MemoryBank::load_snapshot(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open file for reading: " + path);
  std::string line;
  if (!std::getline(f, line)) throw Error("snapshot file is empty: " + path);

  auto line_error = [](std::size_t line_no, const std::string& what) {
    std::ostringstream os;
    os << "snapshot line " << line_no << ": " << what;
    return Error(os.str());
  };

  MemoryBankConfig config;
  try {
    const json header = json::parse(line);
    config.capacity = header.at("capacity").get<std::size_t>();
    config.n_k = header.at("n_k").get<std::size_t>();
    config.strategy = parse_strategy(header.at("strategy").get<std::string>());
    config.update_policy = parse_update_policy(header.at("update_policy").get<std::string>());
    config.scope = parse_scope(header.at("scope").get<std::string>());
  } catch (const json::exception&) {
    throw line_error(1, "malformed header");
  } catch (const Error& e) {
    throw line_error(1, e.what());
  }

  MemoryBank bank{config};
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      const auto id = rec.at("slot_id").get<std::uint64_t>();
      ScoredFeature sf(FeatureVector(rec.at("feature").get<std::vector<double>>()),
                       rec.at("score").get<double>(), rec.at("frame_index").get<std::uint64_t>(),
                       rec.at("class_id").get<std::uint32_t>(),
                       parse_level(rec.at("level").get<std::string>()));
      if (!bank.slots_.empty() && id <= bank.slots_.back().id) {
        throw Error("slot ids must be strictly increasing");
      }
      if (bank.slots_.size() == config.capacity) {
        std::ostringstream os;
        os << "slot count exceeds capacity " << config.capacity;
        throw Error(os.str());
      }
      bank.slots_.push_back({id, std::move(sf)});
    } catch (const json::exception&) {
      throw line_error(line_no, "malformed record");
    } catch (const Error& e) {
      throw line_error(line_no, e.what());
    }
  }
  bank.next_id_ = bank.slots_.empty() ? 0 : bank.slots_.back().id + 1;
  return bank;
}

}  // namespace featmem
