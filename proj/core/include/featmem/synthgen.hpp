#pragma once

#include <cstdint>
#include <vector>

#include "featmem/feature.hpp"
#include "featmem/pipeline.hpp"

namespace featmem {

/// UniformRandom draws every score independently; FrameCorrelated gives all
/// features of a frame one shared base score plus small jitter, so score
/// ranking concentrates on few frames.
enum class ScoreModel { UniformRandom, FrameCorrelated };

/// Configuration of the synthetic feature stream. Features follow per-slot
/// AR(1) chains around class centroids: redundancy_rho controls how similar
/// consecutive frames are, noise_sigma the per-coordinate spread.
struct StreamSpec {
  std::size_t n_frames = 40;
  std::size_t d = 64;
  std::size_t n_classes = 10;
  double centroid_scale = 1.0;
  std::size_t pixel_per_frame = 100;
  std::size_t instance_per_frame = 75;
  double noise_sigma = 0.1;
  double redundancy_rho = 0.0;
  ScoreModel score_model = ScoreModel::UniformRandom;
  double score_spread = 0.1;  // FrameCorrelated jitter width
  std::uint64_t seed = 0;
};

void validate(const StreamSpec& spec);

/// Class centroids: n_classes vectors of d seeded standard normals scaled by
/// centroid_scale. Deterministic in spec.seed alone.
std::vector<FeatureVector> make_centroids(const StreamSpec& spec);

/// Feature slot j of frame t is an AR(1) step from slot j of frame t-1
/// toward its class centroid plus noise, rescaled so the expected norm is
/// constant across t. Classes are assigned round-robin within each level.
std::vector<FrameFeatures> generate_stream(const StreamSpec& spec);

struct EvalSet {
  std::vector<ScoredFeature> queries;
  std::vector<std::uint32_t> labels;
};

/// Noisy copies of the class centroids (std query_sigma) with their
/// generating class ids, for quality evaluation.
EvalSet labeled_eval_set(const StreamSpec& spec, std::size_t n_queries, double query_sigma);

}  // namespace featmem
