#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pedsyn/image.hpp"
#include "pedsyn/tensor.hpp"

namespace pedsyn::metrics {

inline constexpr const char* kMetricVersion = "m1";

struct GaussianSummary {
  std::vector<double> mean;             // d
  std::vector<std::vector<double>> cov; // d x d, symmetric
  int dim() const { return static_cast<int>(mean.size()); }
  void validate() const;  // symmetry + numerical PSD (eigenvalues >= -1e-8)
};

// Sample mean and unbiased covariance of an (N,d) feature matrix; N >= 2.
GaussianSummary summarize(const Tensor& features);

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}); the matrix square root
// uses a symmetric eigendecomposition with negative eigenvalues clamped at
// -1e-6 tolerance (beyond that the computation fails).
double fid(const GaussianSummary& a, const GaussianSummary& b);

// Mean pairwise (1 - cosine) over unordered pairs of unit-normalized rows.
double diversity(const Tensor& unit_features);

// 100 * mean over pairs of max(0, cos(image_i, text_i)).
double clip_score(const Tensor& image_features, const Tensor& text_features);

// Fixed seeded random-projection embedder: validates the metric math
// independently of any pretrained network.
class RandomProjectionEmbedder {
 public:
  RandomProjectionEmbedder(int out_dim, uint64_t seed);
  std::string id() const;
  Tensor embed_image(const Image& img) const;                      // (d)
  Tensor embed_text(const std::string& text) const;                // (d)
  Tensor embed_images(const std::vector<Image>& imgs) const;       // (N,d)
  Tensor embed_texts(const std::vector<std::string>& texts) const; // (N,d)
  int dim() const { return out_dim_; }

 private:
  Tensor project(const std::vector<float>& input) const;
  int out_dim_;
  uint64_t seed_;
};

struct MetricReport {
  double fid = -1;  // -1 when no reference set was given
  double diversity = 0;
  double clip_score = -1;  // -1 when no texts were given
  int n = 0;
  std::string extractor_id;
  std::string metric_version = kMetricVersion;
  nlohmann::json to_json() const;
};

}  // namespace pedsyn::metrics
