#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "featmem/feature.hpp"

namespace featmem {

/// Denominator of the similarity scaling factor: sqrt(d/M) (default) or
/// sqrt(d). Both readings are supported; the choice is not serialized.
enum class SimilarityScaling { PerHeadDim, FullDim };

/// Projection weights for multi-head relation attention plus the affine+ReLU
/// transform applied between recursive enhancement stages. Immutable after
/// construction; safe to share across threads.
class GeoParams {
 public:
  /// Takes per-head W_Q, W_K, W_V (each head_dim x dim) and the stage
  /// transform (h_w: dim x dim, h_b: dim). Validates shapes, divisibility of
  /// dim by the head count, and finiteness of every entry.
  GeoParams(std::vector<Eigen::MatrixXd> w_q, std::vector<Eigen::MatrixXd> w_k,
            std::vector<Eigen::MatrixXd> w_v, Eigen::MatrixXd h_w, Eigen::VectorXd h_b,
            SimilarityScaling scaling = SimilarityScaling::PerHeadDim);

  /// Seeded uniform projections in [-1/sqrt(dim), 1/sqrt(dim)]; stage
  /// transform initialized to identity + zero bias.
  static GeoParams random(std::size_t dim, std::size_t heads, std::uint64_t seed,
                          SimilarityScaling scaling = SimilarityScaling::PerHeadDim);

  /// Prescribed weights for quality evaluation: W_Q^m = W_K^m = qk_gain times
  /// the head's identity slice, W_V^m = alpha times the same slice, stage
  /// transform identity + zero bias. Enhancement then adds alpha times an
  /// attention-weighted key average to the query.
  static GeoParams denoising(std::size_t dim, std::size_t heads, double qk_gain, double alpha);

  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(h_w_.rows()); }
  [[nodiscard]] std::size_t heads() const { return w_q_.size(); }
  [[nodiscard]] std::size_t head_dim() const { return dim() / heads(); }

  [[nodiscard]] const Eigen::MatrixXd& w_q(std::size_t head) const { return w_q_[head]; }
  [[nodiscard]] const Eigen::MatrixXd& w_k(std::size_t head) const { return w_k_[head]; }
  [[nodiscard]] const Eigen::MatrixXd& w_v(std::size_t head) const { return w_v_[head]; }
  [[nodiscard]] const Eigen::MatrixXd& h_w() const { return h_w_; }
  [[nodiscard]] const Eigen::VectorXd& h_b() const { return h_b_; }
  [[nodiscard]] SimilarityScaling scaling() const { return scaling_; }

  /// Dimension under the square root of the similarity denominator.
  [[nodiscard]] double scale_dim() const {
    return static_cast<double>(scaling_ == SimilarityScaling::PerHeadDim ? head_dim() : dim());
  }

  /// The stage transform h(x) = ReLU(h_w * x + h_b).
  [[nodiscard]] Eigen::VectorXd transform(const Eigen::VectorXd& x) const {
    return ((h_w_ * x) + h_b_).cwiseMax(0.0);
  }

 private:
  std::vector<Eigen::MatrixXd> w_q_, w_k_, w_v_;
  Eigen::MatrixXd h_w_;
  Eigen::VectorXd h_b_;
  SimilarityScaling scaling_;
};

enum class EmptyKeyBehavior { Identity };

/// Recursive enhancement settings. n_geo is the number of stacked
/// enhancement stages; the stage transform is applied before every stage,
/// including the first.
struct GeoConfig {
  std::size_t n_geo = 1;
  EmptyKeyBehavior empty_key_behavior = EmptyKeyBehavior::Identity;
};

/// Scaled dot product of the projected query and key for one head.
double similarity(const FeatureVector& q, const FeatureVector& k, const GeoParams& params,
                  std::size_t head);

/// Softmax over per-key similarities for one head. Requires non-empty keys.
std::vector<double> attention_weights(const FeatureVector& q, const KeySet& keys,
                                      const GeoParams& params, std::size_t head);

/// Attention-weighted sum of value-projected keys for one head
/// (length head_dim). Requires non-empty keys.
std::vector<double> relation_feature(const FeatureVector& q, const KeySet& keys,
                                     const GeoParams& params, std::size_t head);

/// q plus the concatenation of all per-head relation features. An empty key
/// set returns q unchanged.
FeatureVector geo_enhance(const FeatureVector& q, const KeySet& keys, const GeoParams& params);

/// config.n_geo rounds of x = geo_enhance(h(x), keys). Requires n_geo >= 1.
FeatureVector geo_stack(const FeatureVector& q, const KeySet& keys, const GeoParams& params,
                        const GeoConfig& config);

/// Same contract as geo_enhance, computed with naive nested loops and a plain
/// softmax. Test oracle; shares no evaluation code with geo_enhance.
FeatureVector geo_reference(const FeatureVector& q, const KeySet& keys, const GeoParams& params);

/// Per-head key and value projections computed once for a key set, amortized
/// across many queries. enhance() is numerically identical to geo_enhance
/// (geo_enhance delegates here). Immutable after construction; holds a
/// reference to params, which must outlive this object.
class ProjectedKeySet {
 public:
  ProjectedKeySet(const KeySet& keys, const GeoParams& params);

  [[nodiscard]] std::size_t size() const { return n_; }
  [[nodiscard]] const GeoParams& params() const { return *params_; }

  /// One enhancement pass: q + concat of per-head relation features.
  [[nodiscard]] FeatureVector enhance(const FeatureVector& q) const;

  /// config.n_geo rounds of x = enhance(h(x)).
  [[nodiscard]] FeatureVector enhance_stack(const FeatureVector& q, const GeoConfig& config) const;

 private:
  const GeoParams* params_;
  std::size_t n_;
  std::vector<Eigen::MatrixXd> k_proj_;  // per head: n x head_dim
  std::vector<Eigen::MatrixXd> v_proj_;  // per head: n x head_dim
};

/// Applies one enhancement pass to every query, preserving score and
/// metadata. threads > 1 splits the queries across worker threads; results
/// are identical to the serial order.
std::vector<ScoredFeature> enhance_each(const ProjectedKeySet& keys,
                                        std::span<const ScoredFeature> queries,
                                        unsigned threads = 1);

/// Stacked variant of enhance_each.
std::vector<ScoredFeature> enhance_each_stacked(const ProjectedKeySet& keys,
                                                std::span<const ScoredFeature> queries,
                                                const GeoConfig& config, unsigned threads = 1);

/// Flat binary parameter file: magic "GEO1", dim and heads as little-endian
/// u32, then row-major little-endian f64 blocks W_Q^m, W_K^m, W_V^m per head
/// in head order, then h_w and h_b. The similarity scaling mode is not part
/// of the format; the loader takes it as an argument.
void save_geo_params(const GeoParams& params, const std::string& path);
GeoParams load_geo_params(const std::string& path,
                          SimilarityScaling scaling = SimilarityScaling::PerHeadDim);

}  // namespace featmem
