#include "pedsyn/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "pedsyn/error.hpp"
#include "pedsyn/kernels.hpp"
#include "pedsyn/rng.hpp"
#include "pedsyn/tokenizer.hpp"

namespace pedsyn::metrics {

namespace {

Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& m) {
  int d = static_cast<int>(m.size());
  Eigen::MatrixXd out(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = m[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return out;
}

// PSD square root through a symmetric eigendecomposition with clamping.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m, double clamp_tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw ValidationError("fid: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) < -clamp_tol)
      throw ValidationError("fid: matrix square root failed, eigenvalue " + std::to_string(ev(i)) +
                            " below tolerance");
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

void GaussianSummary::validate() const {
  int d = dim();
  if (static_cast<int>(cov.size()) != d) throw DimensionError("summary: covariance size mismatch");
  for (int i = 0; i < d; ++i) {
    if (static_cast<int>(cov[static_cast<size_t>(i)].size()) != d)
      throw DimensionError("summary: covariance not square");
    for (int j = 0; j < d; ++j)
      if (std::fabs(cov[static_cast<size_t>(i)][static_cast<size_t>(j)] -
                    cov[static_cast<size_t>(j)][static_cast<size_t>(i)]) > 1e-9)
        throw ValidationError("summary: covariance not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(cov));
  if (es.eigenvalues().minCoeff() < -1e-8)
    throw ValidationError("summary: covariance has eigenvalue below -1e-8");
}

GaussianSummary summarize(const Tensor& features) {
  if (features.ndim() != 2) throw DimensionError("summarize: need (N,d) features");
  int n = features.dim(0), d = features.dim(1);
  if (n < 2) throw ValidationError("summarize: need at least 2 rows");
  GaussianSummary s;
  s.mean.assign(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      s.mean[static_cast<size_t>(j)] += features.data[static_cast<size_t>(i) * d + j];
  for (auto& v : s.mean) v /= n;
  s.cov.assign(static_cast<size_t>(d), std::vector<double>(static_cast<size_t>(d), 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      double dj = features.data[static_cast<size_t>(i) * d + j] - s.mean[static_cast<size_t>(j)];
      for (int k = j; k < d; ++k) {
        double dk = features.data[static_cast<size_t>(i) * d + k] - s.mean[static_cast<size_t>(k)];
        s.cov[static_cast<size_t>(j)][static_cast<size_t>(k)] += dj * dk;
      }
    }
  for (int j = 0; j < d; ++j)
    for (int k = j; k < d; ++k) {
      double v = s.cov[static_cast<size_t>(j)][static_cast<size_t>(k)] / (n - 1);
      s.cov[static_cast<size_t>(j)][static_cast<size_t>(k)] = v;
      s.cov[static_cast<size_t>(k)][static_cast<size_t>(j)] = v;
    }
  return s;
}

double fid(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.dim() != b.dim()) throw DimensionError("fid: dimension mismatch");
  int d = a.dim();
  double mean_term = 0;
  for (int i = 0; i < d; ++i) {
    double diff = a.mean[static_cast<size_t>(i)] - b.mean[static_cast<size_t>(i)];
    mean_term += diff * diff;
  }
  Eigen::MatrixXd sa = to_eigen(a.cov), sb = to_eigen(b.cov);
  constexpr double tol = 1e-6;
  // tr((Sa Sb)^{1/2}) computed via the symmetric form ra Sb ra.
  Eigen::MatrixXd ra = sqrt_psd(sa, tol);
  Eigen::MatrixXd inner = ra * sb * ra;
  inner = 0.5 * (inner + inner.transpose());  // fold numerical asymmetry
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
  if (es.info() != Eigen::Success) throw ValidationError("fid: eigendecomposition failed");
  double tr_sqrt = 0;
  for (int i = 0; i < d; ++i) {
    double ev = es.eigenvalues()(i);
    if (ev < -tol)
      throw ValidationError("fid: matrix square root failed, eigenvalue " + std::to_string(ev));
    tr_sqrt += std::sqrt(std::max(0.0, ev));
  }
  double result = mean_term + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, result);
}

double diversity(const Tensor& unit_features) {
  if (unit_features.ndim() != 2) throw DimensionError("diversity: need (N,d) features");
  int n = unit_features.dim(0), d = unit_features.dim(1);
  if (n < 2) throw ValidationError("diversity: need at least 2 rows");
  Tensor sims({n, n});
  kern::pairwise_dot(unit_features.ptr(), sims.ptr(), n, d, kern::default_exec());
  double acc = 0;
  int64_t pairs = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      acc += 1.0 - sims.data[static_cast<size_t>(i) * n + j];
      ++pairs;
    }
  return acc / static_cast<double>(pairs);
}

double clip_score(const Tensor& image_features, const Tensor& text_features) {
  if (image_features.ndim() != 2 || text_features.ndim() != 2 ||
      !image_features.same_shape(text_features))
    throw DimensionError("clip_score: paired (N,d) features required");
  int n = image_features.dim(0), d = image_features.dim(1);
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    double dot = 0;
    for (int j = 0; j < d; ++j)
      dot += static_cast<double>(image_features.data[static_cast<size_t>(i) * d + j]) *
             text_features.data[static_cast<size_t>(i) * d + j];
    acc += std::max(0.0, dot);
  }
  return 100.0 * acc / n;
}

// -------------------------------------------------------------- embedder --

RandomProjectionEmbedder::RandomProjectionEmbedder(int out_dim, uint64_t seed)
    : out_dim_(out_dim), seed_(seed) {}

std::string RandomProjectionEmbedder::id() const {
  return "randproj-d" + std::to_string(out_dim_) + "-s" + std::to_string(seed_);
}

Tensor RandomProjectionEmbedder::project(const std::vector<float>& input) const {
  // Row i of the implicit projection matrix is generated on the fly from
  // (seed, i); the same seed always gives the same embedder.
  Tensor out({out_dim_});
  for (int i = 0; i < out_dim_; ++i) {
    Rng rng(mix64(seed_, static_cast<uint64_t>(i) + 1));
    float acc = 0.f;
    for (float v : input) acc += v * rng.next_normal();
    out.data[static_cast<size_t>(i)] = acc / std::sqrt(static_cast<float>(input.size()));
  }
  return out;
}

Tensor RandomProjectionEmbedder::embed_image(const Image& img) const {
  // 8x8x3 block means keep the projection input size fixed across sizes.
  constexpr int kGrid = 8;
  std::vector<float> cells(kGrid * kGrid * 3, 0.f);
  std::vector<int> counts(kGrid * kGrid, 0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      int gx = x * kGrid / img.width, gy = y * kGrid / img.height;
      int cell = gy * kGrid + gx;
      const uint8_t* p = img.px(x, y);
      for (int c = 0; c < 3; ++c) cells[static_cast<size_t>(cell) * 3 + c] += p[c] / 255.f;
      ++counts[static_cast<size_t>(cell)];
    }
  for (int cell = 0; cell < kGrid * kGrid; ++cell)
    if (counts[static_cast<size_t>(cell)])
      for (int c = 0; c < 3; ++c) cells[static_cast<size_t>(cell) * 3 + c] /= counts[static_cast<size_t>(cell)];
  return project(cells);
}

Tensor RandomProjectionEmbedder::embed_text(const std::string& text) const {
  // Hashed bag of words into a fixed slot vector, then projected.
  constexpr int kSlots = 128;
  std::vector<float> slots(kSlots, 0.f);
  for (const auto& w : Vocabulary::split_words(text))
    slots[fnv1a64(w) % kSlots] += 1.f;
  float norm = 0.f;
  for (float v : slots) norm += v * v;
  if (norm > 0) {
    float inv = 1.f / std::sqrt(norm);
    for (auto& v : slots) v *= inv;
  }
  return project(slots);
}

Tensor RandomProjectionEmbedder::embed_images(const std::vector<Image>& imgs) const {
  Tensor out({static_cast<int>(imgs.size()), out_dim_});
  for (size_t i = 0; i < imgs.size(); ++i) {
    Tensor e = embed_image(imgs[i]);
    std::copy(e.data.begin(), e.data.end(), out.data.begin() + static_cast<int64_t>(i) * out_dim_);
  }
  return out;
}

Tensor RandomProjectionEmbedder::embed_texts(const std::vector<std::string>& texts) const {
  Tensor out({static_cast<int>(texts.size()), out_dim_});
  for (size_t i = 0; i < texts.size(); ++i) {
    Tensor e = embed_text(texts[i]);
    std::copy(e.data.begin(), e.data.end(), out.data.begin() + static_cast<int64_t>(i) * out_dim_);
  }
  return out;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["fid"] = fid;
  j["diversity"] = diversity;
  j["clip_score"] = clip_score;
  j["n"] = n;
  j["extractor_id"] = extractor_id;
  j["metric_version"] = metric_version;
  return j;
}

}  // namespace pedsyn::metrics
