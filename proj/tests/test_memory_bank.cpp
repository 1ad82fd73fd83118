#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "featmem/error.hpp"
#include "featmem/memory_bank.hpp"

using namespace featmem;

namespace {

ScoredFeature feat(double value, double score, std::uint64_t frame, std::uint32_t class_id = 0,
                   FeatureLevel level = FeatureLevel::Instance) {
  return ScoredFeature(FeatureVector({value}), score, frame, class_id, level);
}

std::vector<ScoredFeature> frame_batch(std::uint64_t frame, const std::vector<double>& scores,
                                       std::uint32_t class_id = 0) {
  std::vector<ScoredFeature> batch;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    batch.push_back(feat(static_cast<double>(i), scores[i], frame, class_id));
  }
  return batch;
}

MemoryBankConfig config_of(std::size_t capacity, std::size_t n_k, SamplingStrategy strategy,
                           UpdatePolicy policy = UpdatePolicy::feature_wise(
                               SamplingStrategy::Random),
                           MemoryScope scope = MemoryScope::VideoWise) {
  MemoryBankConfig c;
  c.capacity = capacity;
  c.n_k = n_k;
  c.strategy = strategy;
  c.update_policy = policy;
  c.scope = scope;
  return c;
}

std::set<std::uint64_t> frames_of(const MemoryBank& bank) {
  std::set<std::uint64_t> frames;
  for (const auto& e : bank.concat_key_set().elements) frames.insert(e.frame_index);
  return frames;
}

}  // namespace

TEST_CASE("insert under capacity stores everything, evicts nothing") {
  MemoryBank bank(config_of(3, 2, SamplingStrategy::Random));
  SeededRng rng(1);
  auto report = bank.insert_batch(frame_batch(0, {0.5, 0.6}), rng);
  CHECK(bank.size() == 2);
  CHECK(report.count == 0);
  CHECK(report.slots.empty());
}

TEST_CASE("frame-wise eviction drops whole oldest frames") {
  MemoryBank bank(config_of(4, 2, SamplingStrategy::Random, UpdatePolicy::frame_wise()));
  SeededRng rng(1);
  bank.insert_batch(frame_batch(1, {0.5, 0.6}), rng);
  bank.insert_batch(frame_batch(2, {0.5, 0.6}), rng);
  auto report = bank.insert_batch(frame_batch(3, {0.5, 0.6}), rng);
  CHECK(bank.size() == 4);
  CHECK(report.count == 2);
  CHECK(frames_of(bank) == std::set<std::uint64_t>{2, 3});
}

TEST_CASE("feature-wise random eviction keeps size at capacity, any slot eligible") {
  std::vector<std::size_t> evictions(4, 0);
  const int trials = 100'000;
  for (int t = 0; t < trials; ++t) {
    MemoryBank bank(config_of(3, 2, SamplingStrategy::Random));
    SeededRng rng(static_cast<std::uint64_t>(t));
    bank.insert_batch(frame_batch(0, {0.1, 0.2, 0.3}), rng);
    auto report = bank.insert_batch(frame_batch(1, {0.4}), rng);
    CHECK(bank.size() == 3);
    REQUIRE(report.count == 1);
    REQUIRE(report.slots.size() == 1);
    ++evictions[report.slots[0]];
  }
  // Victim uniform over all four slots, newly inserted slot 3 included.
  for (auto count : evictions) {
    double freq = static_cast<double>(count) / trials;
    CHECK(std::abs(freq - 0.25) < 0.02);
  }
}

TEST_CASE("score-ranking eviction removes exactly the lowest scores") {
  MemoryBank bank(config_of(5, 2, SamplingStrategy::Random,
                            UpdatePolicy::feature_wise(SamplingStrategy::ScoreRanking)));
  SeededRng rng(1);
  bank.insert_batch(frame_batch(0, {0.9, 0.1, 0.5, 0.3, 0.7}), rng);
  auto report = bank.insert_batch(frame_batch(1, {0.6, 0.2}), rng);
  CHECK(report.count == 2);
  std::multiset<double> remaining;
  for (const auto& e : bank.concat_key_set().elements) remaining.insert(e.score);
  CHECK(remaining == std::multiset<double>{0.3, 0.5, 0.6, 0.7, 0.9});
}

TEST_CASE("frequency-guided eviction prefers low scores") {
  int low_evicted = 0, high_evicted = 0;
  for (int t = 0; t < 200; ++t) {
    MemoryBank bank(config_of(100, 2, SamplingStrategy::Random,
                              UpdatePolicy::feature_wise(SamplingStrategy::FrequencyGuided)));
    SeededRng rng(static_cast<std::uint64_t>(t));
    bank.insert_batch(frame_batch(0, std::vector<double>(50, 0.05)), rng);
    bank.insert_batch(frame_batch(1, std::vector<double>(50, 0.95)), rng);
    bank.insert_batch(frame_batch(2, std::vector<double>(20, 0.5)), rng);
    CHECK(bank.size() == 100);
    int low_left = 0, high_left = 0;
    for (const auto& e : bank.concat_key_set().elements) {
      if (e.score == 0.05) ++low_left;
      if (e.score == 0.95) ++high_left;
    }
    low_evicted += 50 - low_left;
    high_evicted += 50 - high_left;
  }
  CHECK(low_evicted > high_evicted);
}

TEST_CASE("insert_batch validations") {
  MemoryBank bank(config_of(3, 2, SamplingStrategy::Random));
  SeededRng rng(1);
  CHECK_THROWS_AS((void)bank.insert_batch(frame_batch(0, {0.1, 0.2, 0.3, 0.4}), rng), Error);

  std::vector<ScoredFeature> mixed{feat(0.0, 0.5, 0), feat(1.0, 0.5, 1)};
  CHECK_THROWS_AS((void)bank.insert_batch(mixed, rng), Error);

  bank.insert_batch(frame_batch(0, {0.5}), rng);
  std::vector<ScoredFeature> wrong_dim{
      ScoredFeature(FeatureVector({1.0, 2.0}), 0.5, 1, 0, FeatureLevel::Instance)};
  CHECK_THROWS_AS((void)bank.insert_batch(wrong_dim, rng), Error);

  MemoryBankConfig pixel_only = config_of(3, 2, SamplingStrategy::Random);
  pixel_only.expected_level = FeatureLevel::Pixel;
  MemoryBank strict(pixel_only);
  std::vector<ScoredFeature> instance_batch{feat(0.0, 0.5, 0)};
  CHECK_THROWS_AS((void)strict.insert_batch(instance_batch, rng), Error);

  CHECK_THROWS_AS(MemoryBank(config_of(0, 2, SamplingStrategy::Random)), Error);
}

TEST_CASE("empty bank or zero n_k yields an empty key set without consuming draws") {
  MemoryBank bank(config_of(10, 3, SamplingStrategy::Random));
  SeededRng a(9);
  SeededRng b(9);
  CHECK(bank.construct_key_set(a).empty());
  CHECK(a.next_u64() == b.next_u64());

  MemoryBank no_keys(config_of(10, 0, SamplingStrategy::Random));
  SeededRng c(9);
  SeededRng d(9);
  no_keys.insert_batch(frame_batch(0, {0.5, 0.6}), c);
  SeededRng c2(11);
  SeededRng d2(11);
  CHECK(no_keys.construct_key_set(c2).empty());
  CHECK(c2.next_u64() == d2.next_u64());
}

TEST_CASE("score-ranking key set picks the top scores") {
  MemoryBank bank(config_of(10, 2, SamplingStrategy::ScoreRanking));
  SeededRng rng(1);
  bank.insert_batch(frame_batch(0, {0.9, 0.5, 0.7}), rng);
  KeySet keys = bank.construct_key_set(rng);
  REQUIRE(keys.size() == 2);
  std::multiset<double> scores{keys.elements[0].score, keys.elements[1].score};
  CHECK(scores == std::multiset<double>{0.7, 0.9});
}

TEST_CASE("score-ranking breaks ties by recency, then slot id") {
  MemoryBank bank(config_of(10, 2, SamplingStrategy::ScoreRanking));
  SeededRng rng(1);
  bank.insert_batch(frame_batch(0, {0.5, 0.5}), rng);  // slots 0, 1
  bank.insert_batch(frame_batch(1, {0.5, 0.5}), rng);  // slots 2, 3
  KeySet keys = bank.construct_key_set(rng);
  REQUIRE(keys.size() == 2);
  CHECK(keys.source_slots == std::vector<std::uint64_t>{3, 2});
}

TEST_CASE("score-ranking dominance: selected minimum beats excluded maximum") {
  MemoryBank bank(config_of(30, 5, SamplingStrategy::ScoreRanking));
  SeededRng rng(33);
  for (std::uint64_t f = 0; f < 4; ++f) {
    std::vector<double> scores;
    for (int i = 0; i < 5; ++i) scores.push_back(rng.next_double());
    bank.insert_batch(frame_batch(f, scores), rng);
  }
  KeySet keys = bank.construct_key_set(rng);
  REQUIRE(keys.size() == 5);
  std::set<std::uint64_t> picked(keys.source_slots.begin(), keys.source_slots.end());
  double min_selected = 1.0;
  for (const auto& e : keys.elements) min_selected = std::min(min_selected, e.score);
  double max_excluded = 0.0;
  KeySet all = bank.concat_key_set();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!picked.count(all.source_slots[i])) {
      max_excluded = std::max(max_excluded, all.elements[i].score);
    }
  }
  CHECK(min_selected >= max_excluded);
}

TEST_CASE("random key sets are uniform over slots") {
  MemoryBank bank(config_of(10, 3, SamplingStrategy::Random));
  SeededRng fill(1);
  bank.insert_batch(frame_batch(0, std::vector<double>(10, 0.5)), fill);
  std::vector<std::size_t> hits(10, 0);
  const int trials = 100'000;
  for (int t = 0; t < trials; ++t) {
    SeededRng rng(static_cast<std::uint64_t>(t));
    for (auto slot : bank.construct_key_set(rng).source_slots) ++hits[slot];
  }
  for (auto h : hits) {
    double freq = static_cast<double>(h) / trials;
    CHECK(std::abs(freq - 0.3) < 0.02);
  }
}

TEST_CASE("frequency-guided key sets are uniform when scores are equal") {
  MemoryBank bank(config_of(10, 2, SamplingStrategy::FrequencyGuided));
  SeededRng fill(1);
  bank.insert_batch(frame_batch(0, std::vector<double>(10, 0.4)), fill);
  std::vector<std::size_t> hits(10, 0);
  const int trials = 100'000;
  for (int t = 0; t < trials; ++t) {
    SeededRng rng(static_cast<std::uint64_t>(t));
    for (auto slot : bank.construct_key_set(rng).source_slots) ++hits[slot];
  }
  for (auto h : hits) {
    double freq = static_cast<double>(h) / trials;
    CHECK(std::abs(freq - 0.2) < 0.02);
  }
}

TEST_CASE("frequency-guided inclusion frequency is monotone in score") {
  MemoryBank bank(config_of(6, 2, SamplingStrategy::FrequencyGuided));
  SeededRng fill(1);
  bank.insert_batch(frame_batch(0, {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}), fill);
  std::vector<std::size_t> hits(6, 0);
  const int trials = 100'000;
  for (int t = 0; t < trials; ++t) {
    SeededRng rng(static_cast<std::uint64_t>(t));
    for (auto slot : bank.construct_key_set(rng).source_slots) ++hits[slot];
  }
  // Slot order matches ascending score order here.
  for (std::size_t i = 0; i + 1 < hits.size(); ++i) CHECK(hits[i] <= hits[i + 1]);
}

TEST_CASE("concat returns every slot in id order and matches score-ranking as a set") {
  MemoryBank empty(config_of(5, 3, SamplingStrategy::Random));
  CHECK(empty.concat_key_set().empty());

  MemoryBank bank(config_of(10, 8, SamplingStrategy::ScoreRanking));
  SeededRng rng(2);
  bank.insert_batch(frame_batch(0, {0.1, 0.9, 0.4}), rng);
  bank.insert_batch(frame_batch(1, {0.8, 0.2}), rng);
  KeySet all = bank.concat_key_set();
  REQUIRE(all.size() == 5);
  CHECK(all.source_slots == std::vector<std::uint64_t>{0, 1, 2, 3, 4});

  KeySet ranked = bank.construct_key_set(rng);
  CHECK(std::set<std::uint64_t>(ranked.source_slots.begin(), ranked.source_slots.end()) ==
        std::set<std::uint64_t>(all.source_slots.begin(), all.source_slots.end()));
}

TEST_CASE("clear empties video-wise banks and leaves class-wise banks untouched") {
  MemoryBank video(config_of(10, 3, SamplingStrategy::Random));
  SeededRng rng(1);
  video.insert_batch(frame_batch(0, std::vector<double>(4, 0.5)), rng);
  video.clear();
  CHECK(video.size() == 0);
  video.clear();
  CHECK(video.size() == 0);

  MemoryBank classwise(config_of(10, 3, SamplingStrategy::Random,
                                 UpdatePolicy::feature_wise(SamplingStrategy::Random),
                                 MemoryScope::ClassWise));
  classwise.insert_batch(frame_batch(0, std::vector<double>(4, 0.5)), rng);
  classwise.clear();
  CHECK(classwise.size() == 4);
}

TEST_CASE("class filter restricts candidates to one class") {
  for (auto strategy : {SamplingStrategy::Random, SamplingStrategy::ScoreRanking,
                        SamplingStrategy::FrequencyGuided}) {
    MemoryBank bank(config_of(20, 4, strategy));
    SeededRng rng(3);
    std::vector<ScoredFeature> batch;
    for (int i = 0; i < 12; ++i) {
      batch.push_back(feat(static_cast<double>(i), 0.5, 0, static_cast<std::uint32_t>(i % 3)));
    }
    bank.insert_batch(batch, rng);
    KeySet keys = bank.construct_key_set(rng, 1U);
    CHECK(keys.size() == 4);
    for (const auto& e : keys.elements) CHECK(e.class_id == 1);

    KeySet none = bank.construct_key_set(rng, 77U);
    CHECK(none.empty());
  }
}

TEST_CASE("stats: counts, entropy closed forms, histogram") {
  MemoryBank bank(config_of(50, 3, SamplingStrategy::Random));
  SeededRng rng(1);
  bank.insert_batch(frame_batch(0, {0.05, 0.05, 0.95, 0.95}), rng);
  BankStats one_frame = bank.stats();
  CHECK(one_frame.size == 4);
  CHECK(one_frame.distinct_frames == 1);
  CHECK(one_frame.frame_entropy == 0.0);
  REQUIRE(one_frame.score_histogram.size() == 10);
  CHECK(one_frame.score_histogram[0] == 2);
  CHECK(one_frame.score_histogram[9] == 2);

  for (std::uint64_t f = 1; f < 4; ++f) bank.insert_batch(frame_batch(f, {0.5, 0.5, 0.5, 0.5}), rng);
  CHECK(bank.stats().distinct_frames == 4);
  CHECK(bank.stats().frame_entropy == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  bank.insert_batch(frame_batch(4, std::vector<double>(8, 0.5)), rng);
  // 4 + 4 + 4 + 4 + 8 features over 5 frames.
  const double p_small = 4.0 / 24.0, p_big = 8.0 / 24.0;
  const double expected = -(4.0 * p_small * std::log(p_small) + p_big * std::log(p_big));
  CHECK(bank.stats().frame_entropy == doctest::Approx(expected).epsilon(1e-12));

  CHECK(frame_entropy(bank.concat_key_set()) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(frame_entropy(KeySet{}) == 0.0);
}

TEST_CASE("score 1.0 lands in the top histogram bin") {
  MemoryBank bank(config_of(5, 2, SamplingStrategy::Random));
  SeededRng rng(1);
  bank.insert_batch(frame_batch(0, {1.0}), rng);
  CHECK(bank.stats().score_histogram[9] == 1);
}

TEST_CASE("snapshot round-trip reproduces contents, config, and key sets") {
  MemoryBank bank(config_of(40, 5, SamplingStrategy::FrequencyGuided,
                            UpdatePolicy::feature_wise(SamplingStrategy::ScoreRanking),
                            MemoryScope::ClassWise));
  SeededRng rng(6);
  for (std::uint64_t f = 0; f < 3; ++f) {
    std::vector<ScoredFeature> batch;
    for (int i = 0; i < 6; ++i) {
      batch.push_back(ScoredFeature(FeatureVector({rng.next_gaussian(), rng.next_gaussian()}),
                                    rng.next_double(), f, static_cast<std::uint32_t>(i % 2),
                                    FeatureLevel::Instance));
    }
    bank.insert_batch(batch, rng);
  }

  const std::string path = "bank_snapshot_test.jsonl";
  bank.save_snapshot(path);
  MemoryBank loaded = MemoryBank::load_snapshot(path);

  CHECK(loaded.config().capacity == 40);
  CHECK(loaded.config().n_k == 5);
  CHECK(loaded.config().strategy == SamplingStrategy::FrequencyGuided);
  CHECK(loaded.config().update_policy ==
        UpdatePolicy::feature_wise(SamplingStrategy::ScoreRanking));
  CHECK(loaded.config().scope == MemoryScope::ClassWise);
  CHECK(loaded.size() == bank.size());

  KeySet a = bank.concat_key_set();
  KeySet b = loaded.concat_key_set();
  REQUIRE(a.size() == b.size());
  CHECK(a.source_slots == b.source_slots);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.elements[i].feature == b.elements[i].feature);
    CHECK(a.elements[i].score == b.elements[i].score);
    CHECK(a.elements[i].frame_index == b.elements[i].frame_index);
    CHECK(a.elements[i].class_id == b.elements[i].class_id);
    CHECK(a.elements[i].level == b.elements[i].level);
  }

  SeededRng s1(99);
  SeededRng s2(99);
  KeySet k1 = bank.construct_key_set(s1);
  KeySet k2 = loaded.construct_key_set(s2);
  CHECK(k1.source_slots == k2.source_slots);

  // Inserting into the loaded bank continues from fresh slot ids.
  SeededRng s3(5);
  std::vector<ScoredFeature> more{
      ScoredFeature(FeatureVector({0.1, 0.2}), 0.5, 7, 0, FeatureLevel::Instance)};
  loaded.insert_batch(more, s3);
  auto slots = loaded.concat_key_set().source_slots;
  CHECK(slots.back() > a.source_slots.back());
  std::remove(path.c_str());
}

TEST_CASE("snapshot loading rejects malformed files") {
  auto write_file = [](const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
  };
  const std::string path = "bank_snapshot_bad.jsonl";

  write_file(path, "");
  CHECK_THROWS_AS((void)MemoryBank::load_snapshot(path), Error);

  write_file(path, "not json\n");
  CHECK_THROWS_AS((void)MemoryBank::load_snapshot(path), Error);

  const std::string header =
      R"({"capacity":10,"n_k":2,"scope":"video","strategy":"random","update_policy":"feature-random"})";
  const std::string rec5 =
      R"({"class_id":0,"feature":[1.0],"frame_index":0,"level":"instance","score":0.5,"slot_id":5})";
  const std::string rec3 =
      R"({"class_id":0,"feature":[1.0],"frame_index":1,"level":"instance","score":0.5,"slot_id":3})";

  write_file(path, header + "\n" + rec5 + "\n" + rec3 + "\n");
  CHECK_THROWS_AS((void)MemoryBank::load_snapshot(path), Error);

  write_file(path, header + "\n" + R"({"slot_id":0})" + "\n");
  CHECK_THROWS_AS((void)MemoryBank::load_snapshot(path), Error);

  const std::string tiny_header =
      R"({"capacity":1,"n_k":2,"scope":"video","strategy":"random","update_policy":"feature-random"})";
  write_file(path, tiny_header + "\n" + rec3 + "\n" + rec5 + "\n");
  CHECK_THROWS_AS((void)MemoryBank::load_snapshot(path), Error);

  CHECK_THROWS_AS((void)MemoryBank::load_snapshot("bank_snapshot_missing.jsonl"), Error);
  std::remove(path.c_str());
}

TEST_CASE("identical seeds and operations give identical banks and key sets") {
  auto run = [](std::uint64_t seed) {
    MemoryBank bank(config_of(8, 3, SamplingStrategy::FrequencyGuided));
    SeededRng rng(seed);
    for (std::uint64_t f = 0; f < 5; ++f) {
      std::vector<double> scores;
      for (int i = 0; i < 4; ++i) scores.push_back(rng.next_double());
      bank.insert_batch(frame_batch(f, scores), rng);
    }
    return std::make_pair(bank.concat_key_set().source_slots,
                          bank.construct_key_set(rng).source_slots);
  };
  auto [all_a, keys_a] = run(123);
  auto [all_b, keys_b] = run(123);
  CHECK(all_a == all_b);
  CHECK(keys_a == keys_b);
  auto [all_c, keys_c] = run(124);
  CHECK((all_a != all_c || keys_a != keys_c));
}

TEST_CASE("policy and scope names round-trip") {
  CHECK(parse_strategy("random") == SamplingStrategy::Random);
  CHECK(parse_strategy("score") == SamplingStrategy::ScoreRanking);
  CHECK(parse_strategy("freq") == SamplingStrategy::FrequencyGuided);
  CHECK_THROWS_AS((void)parse_strategy("roulette"), Error);
  for (auto s : {SamplingStrategy::Random, SamplingStrategy::ScoreRanking,
                 SamplingStrategy::FrequencyGuided}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }

  CHECK(parse_update_policy("frame") == UpdatePolicy::frame_wise());
  CHECK(parse_update_policy("feature-score") ==
        UpdatePolicy::feature_wise(SamplingStrategy::ScoreRanking));
  CHECK_THROWS_AS((void)parse_update_policy("feature-roulette"), Error);
  CHECK(to_string(UpdatePolicy::frame_wise()) == "frame");
  CHECK(to_string(UpdatePolicy::feature_wise(SamplingStrategy::FrequencyGuided)) ==
        "feature-freq");

  CHECK(parse_scope("video") == MemoryScope::VideoWise);
  CHECK(parse_scope("class") == MemoryScope::ClassWise);
  CHECK_THROWS_AS((void)parse_scope("global"), Error);
}
