#pragma once

#include <span>
#include <string>
#include <vector>

#include "featmem/pipeline.hpp"

namespace featmem {

/// Stream files are JSONL: one frame per line,
/// {"frame_index": t, "pixel": [{"score", "class_id", "feature"}], "instance": [...]}.
/// Parse failures report the offending line number.
std::vector<FrameFeatures> read_stream_jsonl(const std::string& path);
void write_stream_jsonl(std::span<const FrameFeatures> frames, const std::string& path);

/// Frame results as CSV with columns frame_index, stage, latency_ns,
/// keyset_size, bank_size, distinct_frames; three rows per frame (stages
/// pixel_enhance, instance_enhance, update). Bank columns report the
/// post-update state of the stage's bank (the update row reports the
/// instance bank). Without include_timing, latency_ns is written as 0 so the
/// output is a pure function of the run seed.
std::string frame_results_csv(std::span<const FrameResult> results, bool include_timing);
void write_frame_results_csv(std::span<const FrameResult> results, const std::string& path,
                             bool include_timing);

}  // namespace featmem
