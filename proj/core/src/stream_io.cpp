#include "featmem/stream_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "featmem/csv.hpp"
#include "featmem/error.hpp"

namespace featmem {

using nlohmann::json;

namespace {

json feature_to_json(const ScoredFeature& sf) {
  return {{"score", sf.score}, {"class_id", sf.class_id}, {"feature", sf.feature.values()}};
}

ScoredFeature feature_from_json(const json& j, std::uint64_t frame_index, FeatureLevel level) {
  return {FeatureVector(j.at("feature").get<std::vector<double>>()), j.at("score").get<double>(),
          frame_index, j.at("class_id").get<std::uint32_t>(), level};
}

}  // namespace

std::vector<FrameFeatures> read_stream_jsonl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open file for reading: " + path);

  auto line_error = [](std::size_t line_no, const std::string& what) {
    std::ostringstream os;
    os << "stream line " << line_no << ": " << what;
    return Error(os.str());
  };

  std::vector<FrameFeatures> frames;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      FrameFeatures frame;
      frame.frame_index = rec.at("frame_index").get<std::uint64_t>();
      for (const auto& p : rec.at("pixel")) {
        frame.pixel_features.push_back(
            feature_from_json(p, frame.frame_index, FeatureLevel::Pixel));
      }
      for (const auto& p : rec.at("instance")) {
        frame.instance_features.push_back(
            feature_from_json(p, frame.frame_index, FeatureLevel::Instance));
      }
      frames.push_back(std::move(frame));
    } catch (const json::exception&) {
      throw line_error(line_no, "malformed frame record");
    } catch (const Error& e) {
      throw line_error(line_no, e.what());
    }
  }
  return frames;
}

void write_stream_jsonl(std::span<const FrameFeatures> frames, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open file for writing: " + path);
  for (const auto& frame : frames) {
    json pixel = json::array();
    for (const auto& sf : frame.pixel_features) pixel.push_back(feature_to_json(sf));
    json instance = json::array();
    for (const auto& sf : frame.instance_features) instance.push_back(feature_to_json(sf));
    const json rec = {{"frame_index", frame.frame_index},
                      {"pixel", std::move(pixel)},
                      {"instance", std::move(instance)}};
    f << rec.dump() << '\n';
  }
  if (!f) throw Error("failed writing file: " + path);
}

std::string frame_results_csv(std::span<const FrameResult> results, bool include_timing) {
  CsvWriter csv({"frame_index", "stage", "latency_ns", "keyset_size", "bank_size",
                 "distinct_frames"});
  auto row = [&](std::uint64_t frame, const char* stage, std::uint64_t latency_ns,
                 std::size_t keyset, std::size_t bank_size, std::size_t distinct) {
    csv.add_row({std::to_string(frame), stage,
                 std::to_string(include_timing ? latency_ns : 0), std::to_string(keyset),
                 std::to_string(bank_size), std::to_string(distinct)});
  };
  for (const auto& r : results) {
    row(r.frame_index, "pixel_enhance", r.pixel_enhance_ns, r.pixel_keyset_size,
        r.pixel_bank_size, r.pixel_distinct_frames);
    row(r.frame_index, "instance_enhance", r.instance_enhance_ns, r.instance_keyset_size,
        r.instance_bank_size, r.instance_distinct_frames);
    row(r.frame_index, "update", r.update_ns, 0, r.instance_bank_size, r.instance_distinct_frames);
  }
  return csv.str();
}

void write_frame_results_csv(std::span<const FrameResult> results, const std::string& path,
                             bool include_timing) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open file for writing: " + path);
  f << frame_results_csv(results, include_timing);
  if (!f) throw Error("failed writing file: " + path);
}

}  // namespace featmem
