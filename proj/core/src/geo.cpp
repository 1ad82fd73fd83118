#include "featmem/geo.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>
#include <utility>

#include "featmem/error.hpp"
#include "featmem/math.hpp"
#include "featmem/rng.hpp"

namespace featmem {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vec(const FeatureVector& f) {
  return {f.data(), static_cast<Eigen::Index>(f.dim())};
}

FeatureVector to_feature(const Eigen::VectorXd& v) {
  return FeatureVector(std::vector<double>(v.data(), v.data() + v.size()));
}

void check_query_dim(const FeatureVector& q, const GeoParams& params) {
  if (q.dim() != params.dim()) {
    std::ostringstream os;
    os << "dimension mismatch: query has " << q.dim() << ", parameters expect " << params.dim();
    throw Error(os.str());
  }
}

void check_key_dim(const FeatureVector& k, const GeoParams& params) {
  if (k.dim() != params.dim()) {
    std::ostringstream os;
    os << "dimension mismatch: key has " << k.dim() << ", parameters expect " << params.dim();
    throw Error(os.str());
  }
}

void check_head(std::size_t head, const GeoParams& params) {
  if (head >= params.heads()) {
    std::ostringstream os;
    os << "head index " << head << " out of range for " << params.heads() << " heads";
    throw Error(os.str());
  }
}

}  // namespace

GeoParams::GeoParams(std::vector<Eigen::MatrixXd> w_q, std::vector<Eigen::MatrixXd> w_k,
                     std::vector<Eigen::MatrixXd> w_v, Eigen::MatrixXd h_w, Eigen::VectorXd h_b,
                     SimilarityScaling scaling)
    : w_q_(std::move(w_q)),
      w_k_(std::move(w_k)),
      w_v_(std::move(w_v)),
      h_w_(std::move(h_w)),
      h_b_(std::move(h_b)),
      scaling_(scaling) {
  if (w_q_.empty()) throw Error("head count must be positive");
  if (w_k_.size() != w_q_.size() || w_v_.size() != w_q_.size()) {
    throw Error("mismatched per-head matrix counts");
  }
  if (h_w_.rows() == 0 || h_w_.rows() != h_w_.cols()) {
    throw Error("stage transform matrix must be square and non-empty");
  }
  const auto d = static_cast<std::size_t>(h_w_.rows());
  const std::size_t m = w_q_.size();
  if (d % m != 0) {
    std::ostringstream os;
    os << "feature dimension " << d << " not divisible by head count " << m;
    throw Error(os.str());
  }
  const auto dh = static_cast<Eigen::Index>(d / m);
  const auto dd = static_cast<Eigen::Index>(d);
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto* mat : {&w_q_[i], &w_k_[i], &w_v_[i]}) {
      if (mat->rows() != dh || mat->cols() != dd) throw Error("head matrix has wrong shape");
    }
  }
  if (h_b_.size() != dd) throw Error("stage bias has wrong length");
  bool finite = h_w_.allFinite() && h_b_.allFinite();
  for (std::size_t i = 0; i < m && finite; ++i) {
    finite = w_q_[i].allFinite() && w_k_[i].allFinite() && w_v_[i].allFinite();
  }
  if (!finite) throw Error("parameters contain non-finite values");
}

GeoParams GeoParams::random(std::size_t dim, std::size_t heads, std::uint64_t seed,
                            SimilarityScaling scaling) {
  if (dim == 0) throw Error("feature dimension must be positive");
  if (heads == 0) throw Error("head count must be positive");
  if (dim % heads != 0) {
    std::ostringstream os;
    os << "feature dimension " << dim << " not divisible by head count " << heads;
    throw Error(os.str());
  }
  const auto dh = static_cast<Eigen::Index>(dim / heads);
  const auto dd = static_cast<Eigen::Index>(dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  SeededRng rng(seed);
  auto draw = [&](Eigen::MatrixXd& mat) {
    mat.resize(dh, dd);
    for (Eigen::Index r = 0; r < dh; ++r) {
      for (Eigen::Index c = 0; c < dd; ++c) {
        mat(r, c) = (2.0 * rng.next_double() - 1.0) * scale;
      }
    }
  };
  std::vector<Eigen::MatrixXd> wq(heads), wk(heads), wv(heads);
  for (std::size_t m = 0; m < heads; ++m) {
    draw(wq[m]);
    draw(wk[m]);
    draw(wv[m]);
  }
  return {std::move(wq), std::move(wk), std::move(wv), Eigen::MatrixXd::Identity(dd, dd),
          Eigen::VectorXd::Zero(dd), scaling};
}

GeoParams GeoParams::denoising(std::size_t dim, std::size_t heads, double qk_gain, double alpha) {
  if (dim == 0) throw Error("feature dimension must be positive");
  if (heads == 0) throw Error("head count must be positive");
  if (dim % heads != 0) {
    std::ostringstream os;
    os << "feature dimension " << dim << " not divisible by head count " << heads;
    throw Error(os.str());
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("alpha must be in (0, 1]");
  if (!std::isfinite(qk_gain)) throw Error("qk_gain must be finite");
  const auto dh = static_cast<Eigen::Index>(dim / heads);
  const auto dd = static_cast<Eigen::Index>(dim);
  std::vector<Eigen::MatrixXd> wq(heads), wk(heads), wv(heads);
  for (std::size_t m = 0; m < heads; ++m) {
    Eigen::MatrixXd slice = Eigen::MatrixXd::Zero(dh, dd);
    for (Eigen::Index r = 0; r < dh; ++r) slice(r, static_cast<Eigen::Index>(m) * dh + r) = 1.0;
    wq[m] = qk_gain * slice;
    wk[m] = qk_gain * slice;
    wv[m] = alpha * slice;
  }
  return {std::move(wq), std::move(wk), std::move(wv), Eigen::MatrixXd::Identity(dd, dd),
          Eigen::VectorXd::Zero(dd)};
}

double similarity(const FeatureVector& q, const FeatureVector& k, const GeoParams& params,
                  std::size_t head) {
  check_query_dim(q, params);
  check_key_dim(k, params);
  check_head(head, params);
  const Eigen::VectorXd qp = params.w_q(head) * as_vec(q);
  const Eigen::VectorXd kp = params.w_k(head) * as_vec(k);
  return qp.dot(kp) / std::sqrt(params.scale_dim());
}

std::vector<double> attention_weights(const FeatureVector& q, const KeySet& keys,
                                      const GeoParams& params, std::size_t head) {
  if (keys.empty()) throw Error("attention weights require a non-empty key set");
  check_query_dim(q, params);
  check_head(head, params);
  const Eigen::VectorXd qp = params.w_q(head) * as_vec(q);
  const double inv_scale = 1.0 / std::sqrt(params.scale_dim());
  std::vector<double> logits(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) {
    const auto& k = keys.elements[j].feature;
    check_key_dim(k, params);
    logits[j] = qp.dot(params.w_k(head) * as_vec(k)) * inv_scale;
  }
  return softmax(logits);
}

std::vector<double> relation_feature(const FeatureVector& q, const KeySet& keys,
                                     const GeoParams& params, std::size_t head) {
  const std::vector<double> w = attention_weights(q, keys, params, head);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.head_dim()));
  for (std::size_t j = 0; j < keys.size(); ++j) {
    acc += w[j] * (params.w_v(head) * as_vec(keys.elements[j].feature));
  }
  return {acc.data(), acc.data() + acc.size()};
}

ProjectedKeySet::ProjectedKeySet(const KeySet& keys, const GeoParams& params)
    : params_(&params), n_(keys.size()) {
  if (n_ == 0) return;
  const auto dd = static_cast<Eigen::Index>(params.dim());
  Eigen::MatrixXd key_mat(static_cast<Eigen::Index>(n_), dd);
  for (std::size_t j = 0; j < n_; ++j) {
    const auto& k = keys.elements[j].feature;
    check_key_dim(k, params);
    key_mat.row(static_cast<Eigen::Index>(j)) = as_vec(k).transpose();
  }
  const std::size_t m = params.heads();
  k_proj_.reserve(m);
  v_proj_.reserve(m);
  for (std::size_t h = 0; h < m; ++h) {
    k_proj_.push_back(key_mat * params.w_k(h).transpose());
    v_proj_.push_back(key_mat * params.w_v(h).transpose());
  }
}

FeatureVector ProjectedKeySet::enhance(const FeatureVector& q) const {
  check_query_dim(q, *params_);
  if (n_ == 0) return q;
  const auto dh = static_cast<Eigen::Index>(params_->head_dim());
  const double inv_scale = 1.0 / std::sqrt(params_->scale_dim());
  Eigen::VectorXd out = as_vec(q);
  for (std::size_t h = 0; h < params_->heads(); ++h) {
    const Eigen::VectorXd qp = params_->w_q(h) * as_vec(q);
    Eigen::VectorXd logits = k_proj_[h] * qp * inv_scale;
    Eigen::ArrayXd w = (logits.array() - logits.maxCoeff()).exp();
    w /= w.sum();
    out.segment(static_cast<Eigen::Index>(h) * dh, dh) +=
        v_proj_[h].transpose() * w.matrix();
  }
  return to_feature(out);
}

FeatureVector ProjectedKeySet::enhance_stack(const FeatureVector& q, const GeoConfig& config) const {
  if (config.n_geo == 0) throw Error("recursive enhancement depth must be at least 1");
  check_query_dim(q, *params_);
  FeatureVector x = q;
  for (std::size_t stage = 0; stage < config.n_geo; ++stage) {
    x = enhance(to_feature(params_->transform(as_vec(x))));
  }
  return x;
}

FeatureVector geo_enhance(const FeatureVector& q, const KeySet& keys, const GeoParams& params) {
  return ProjectedKeySet(keys, params).enhance(q);
}

FeatureVector geo_stack(const FeatureVector& q, const KeySet& keys, const GeoParams& params,
                        const GeoConfig& config) {
  return ProjectedKeySet(keys, params).enhance_stack(q, config);
}

FeatureVector geo_reference(const FeatureVector& q, const KeySet& keys, const GeoParams& params) {
  check_query_dim(q, params);
  for (const auto& e : keys.elements) check_key_dim(e.feature, params);
  if (keys.empty()) return q;

  const std::size_t d = params.dim();
  const std::size_t heads = params.heads();
  const std::size_t dh = params.head_dim();
  const std::size_t n = keys.size();
  const double denom = std::sqrt(params.scale_dim());

  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = q[i];

  for (std::size_t m = 0; m < heads; ++m) {
    std::vector<double> qp(dh, 0.0);
    for (std::size_t r = 0; r < dh; ++r) {
      for (std::size_t c = 0; c < d; ++c) qp[r] += params.w_q(m)(r, c) * q[c];
    }
    std::vector<double> expo(n);
    double exp_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& k = keys.elements[j].feature;
      double s = 0.0;
      for (std::size_t r = 0; r < dh; ++r) {
        double kp = 0.0;
        for (std::size_t c = 0; c < d; ++c) kp += params.w_k(m)(r, c) * k[c];
        s += qp[r] * kp;
      }
      expo[j] = std::exp(s / denom);
      exp_sum += expo[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      const auto& k = keys.elements[j].feature;
      const double w = expo[j] / exp_sum;
      for (std::size_t r = 0; r < dh; ++r) {
        double vp = 0.0;
        for (std::size_t c = 0; c < d; ++c) vp += params.w_v(m)(r, c) * k[c];
        out[m * dh + r] += w * vp;
      }
    }
  }
  return FeatureVector(std::move(out));
}

namespace {

std::vector<ScoredFeature> enhance_common(const ProjectedKeySet& keys,
                                          std::span<const ScoredFeature> queries,
                                          const GeoConfig* config, unsigned threads) {
  for (const auto& q : queries) check_query_dim(q.feature, keys.params());
  const std::size_t n = queries.size();
  std::vector<std::optional<FeatureVector>> enhanced(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      enhanced[i] = config ? keys.enhance_stack(queries[i].feature, *config)
                           : keys.enhance(queries[i].feature);
    }
  };
  const std::size_t workers = std::min<std::size_t>(threads == 0 ? 1 : threads, n);
  if (workers <= 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = n * w / workers;
      const std::size_t end = n * (w + 1) / workers;
      pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  std::vector<ScoredFeature> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& src = queries[i];
    out.emplace_back(std::move(*enhanced[i]), src.score, src.frame_index, src.class_id, src.level);
  }
  return out;
}

}  // namespace

std::vector<ScoredFeature> enhance_each(const ProjectedKeySet& keys,
                                        std::span<const ScoredFeature> queries, unsigned threads) {
  return enhance_common(keys, queries, nullptr, threads);
}

std::vector<ScoredFeature> enhance_each_stacked(const ProjectedKeySet& keys,
                                                std::span<const ScoredFeature> queries,
                                                const GeoConfig& config, unsigned threads) {
  return enhance_common(keys, queries, &config, threads);
}

namespace {

constexpr char kMagic[4] = {'G', 'E', 'O', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 4);
}

void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(buf, 8);
}

void put_matrix(std::ostream& os, const Eigen::MatrixXd& mat) {
  for (Eigen::Index r = 0; r < mat.rows(); ++r) {
    for (Eigen::Index c = 0; c < mat.cols(); ++c) put_f64(os, mat(r, c));
  }
}

class ByteReader {
 public:
  ByteReader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  double get_f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  void get_matrix(Eigen::MatrixXd& mat, Eigen::Index rows, Eigen::Index cols) {
    mat.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) mat(r, c) = get_f64();
    }
  }

  void expect_magic() {
    need(4);
    for (int i = 0; i < 4; ++i) {
      if (data_[pos_ + i] != kMagic[i]) throw Error("bad magic in parameter file: " + path_);
    }
    pos_ += 4;
  }

  [[nodiscard]] bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) throw Error("truncated parameter file: " + path_);
  }

  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_geo_params(const GeoParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open file for writing: " + path);
  f.write(kMagic, 4);
  put_u32(f, static_cast<std::uint32_t>(params.dim()));
  put_u32(f, static_cast<std::uint32_t>(params.heads()));
  for (std::size_t m = 0; m < params.heads(); ++m) {
    put_matrix(f, params.w_q(m));
    put_matrix(f, params.w_k(m));
    put_matrix(f, params.w_v(m));
  }
  put_matrix(f, params.h_w());
  for (Eigen::Index i = 0; i < params.h_b().size(); ++i) put_f64(f, params.h_b()(i));
  if (!f) throw Error("failed writing file: " + path);
}

GeoParams load_geo_params(const std::string& path, SimilarityScaling scaling) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open file for reading: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  ByteReader reader(std::move(buf).str(), path);

  reader.expect_magic();
  const std::uint32_t d = reader.get_u32();
  const std::uint32_t m = reader.get_u32();
  if (d == 0 || m == 0 || d % m != 0) {
    std::ostringstream os;
    os << "invalid dimensions in parameter file: dim=" << d << " heads=" << m;
    throw Error(os.str());
  }
  const auto dh = static_cast<Eigen::Index>(d / m);
  const auto dd = static_cast<Eigen::Index>(d);
  std::vector<Eigen::MatrixXd> wq(m), wk(m), wv(m);
  for (std::uint32_t h = 0; h < m; ++h) {
    reader.get_matrix(wq[h], dh, dd);
    reader.get_matrix(wk[h], dh, dd);
    reader.get_matrix(wv[h], dh, dd);
  }
  Eigen::MatrixXd hw;
  reader.get_matrix(hw, dd, dd);
  Eigen::VectorXd hb(dd);
  for (Eigen::Index i = 0; i < dd; ++i) hb(i) = reader.get_f64();
  if (!reader.exhausted()) throw Error("trailing bytes after parameters: " + path);
  return {std::move(wq), std::move(wk), std::move(wv), std::move(hw), std::move(hb), scaling};
}

}  // namespace featmem
