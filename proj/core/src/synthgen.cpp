#include "featmem/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "featmem/error.hpp"
#include "featmem/rng.hpp"

namespace featmem {

void validate(const StreamSpec& spec) {
  if (spec.n_frames == 0) throw Error("stream spec: n_frames must be positive");
  if (spec.d == 0) throw Error("stream spec: feature dimension must be positive");
  if (spec.n_classes == 0) throw Error("stream spec: n_classes must be positive");
  if (!std::isfinite(spec.centroid_scale)) throw Error("stream spec: centroid_scale must be finite");
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw Error("stream spec: noise_sigma must be non-negative");
  }
  if (!(spec.redundancy_rho >= 0.0 && spec.redundancy_rho <= 1.0)) {
    throw Error("stream spec: redundancy_rho must be in [0, 1]");
  }
  if (!(spec.score_spread >= 0.0) || !std::isfinite(spec.score_spread)) {
    throw Error("stream spec: score_spread must be non-negative");
  }
}

std::vector<FeatureVector> make_centroids(const StreamSpec& spec) {
  validate(spec);
  SeededRng rng(spec.seed);
  std::vector<FeatureVector> centroids;
  centroids.reserve(spec.n_classes);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    std::vector<double> v(spec.d);
    for (auto& x : v) x = rng.next_gaussian() * spec.centroid_scale;
    centroids.emplace_back(std::move(v));
  }
  for (std::size_t a = 0; a < centroids.size(); ++a) {
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      if (centroids[a] == centroids[b]) {
        std::ostringstream os;
        os << "stream spec: centroids " << a << " and " << b << " coincide";
        throw Error(os.str());
      }
    }
  }
  return centroids;
}

namespace {

// AR(1) state of one feature slot: the unnormalized chain y plus its class.
struct Chain {
  std::uint32_t class_id;
  std::vector<double> y;
};

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

}  // namespace

std::vector<FrameFeatures> generate_stream(const StreamSpec& spec) {
  const std::vector<FeatureVector> centroids = make_centroids(spec);
  SeededRng rng(derive_seed(spec.seed, 1));

  const double rho = spec.redundancy_rho;
  const double innov = std::sqrt(1.0 - rho * rho);
  const double sigma = spec.noise_sigma;
  const auto d = spec.d;

  std::vector<double> cent_sq(spec.n_classes);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    double s = 0.0;
    for (double x : centroids[c].values()) s += x * x;
    cent_sq[c] = s;
  }

  const std::size_t total = spec.pixel_per_frame + spec.instance_per_frame;
  std::vector<Chain> chains(total);
  for (std::size_t j = 0; j < total; ++j) {
    const std::size_t within =
        j < spec.pixel_per_frame ? j : j - spec.pixel_per_frame;  // round-robin per level
    chains[j].class_id = static_cast<std::uint32_t>(within % spec.n_classes);
    chains[j].y.assign(d, 0.0);
  }

  // Mean coefficient a_t and per-coordinate noise variance v_t of the chain
  // y_t = a_t * centroid + noise; shared by every slot.
  double a = 1.0;
  double v = sigma * sigma;

  std::vector<FrameFeatures> frames;
  frames.reserve(spec.n_frames);
  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    if (t == 0) {
      for (auto& ch : chains) {
        const auto& c = centroids[ch.class_id].values();
        for (std::size_t i = 0; i < d; ++i) ch.y[i] = c[i] + rng.next_gaussian() * sigma;
      }
    } else {
      a = rho * a + innov;
      v = rho * rho * v + innov * innov * sigma * sigma;
      for (auto& ch : chains) {
        const auto& c = centroids[ch.class_id].values();
        for (std::size_t i = 0; i < d; ++i) {
          ch.y[i] = rho * ch.y[i] + innov * (c[i] + rng.next_gaussian() * sigma);
        }
      }
    }

    std::vector<double> scores(total);
    if (spec.score_model == ScoreModel::UniformRandom) {
      for (auto& s : scores) s = rng.next_double();
    } else {
      const double base = rng.next_double();
      for (auto& s : scores) {
        s = clamp01(base + spec.score_spread * (rng.next_double() - 0.5));
      }
    }

    FrameFeatures frame;
    frame.frame_index = t;
    frame.pixel_features.reserve(spec.pixel_per_frame);
    frame.instance_features.reserve(spec.instance_per_frame);
    for (std::size_t j = 0; j < total; ++j) {
      const auto& ch = chains[j];
      const double denom = a * a * cent_sq[ch.class_id] + static_cast<double>(d) * v;
      const double numer = cent_sq[ch.class_id] + static_cast<double>(d) * sigma * sigma;
      const double s = denom > 0.0 ? std::sqrt(numer / denom) : 1.0;
      std::vector<double> x(d);
      for (std::size_t i = 0; i < d; ++i) x[i] = ch.y[i] * s;
      const bool pixel = j < spec.pixel_per_frame;
      ScoredFeature sf(FeatureVector(std::move(x)), scores[j], t, ch.class_id,
                       pixel ? FeatureLevel::Pixel : FeatureLevel::Instance);
      (pixel ? frame.pixel_features : frame.instance_features).push_back(std::move(sf));
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

EvalSet labeled_eval_set(const StreamSpec& spec, std::size_t n_queries, double query_sigma) {
  if (!(query_sigma >= 0.0) || !std::isfinite(query_sigma)) {
    throw Error("query_sigma must be non-negative");
  }
  const std::vector<FeatureVector> centroids = make_centroids(spec);
  SeededRng rng(derive_seed(spec.seed, 2));
  EvalSet out;
  out.queries.reserve(n_queries);
  out.labels.reserve(n_queries);
  for (std::size_t q = 0; q < n_queries; ++q) {
    const auto cls = static_cast<std::uint32_t>(q % spec.n_classes);
    const auto& c = centroids[cls].values();
    std::vector<double> v(spec.d);
    for (std::size_t i = 0; i < spec.d; ++i) v[i] = c[i] + rng.next_gaussian() * query_sigma;
    out.queries.emplace_back(FeatureVector(std::move(v)), 1.0, q, cls, FeatureLevel::Instance);
    out.labels.push_back(cls);
  }
  return out;
}

}  // namespace featmem
