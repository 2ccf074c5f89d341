#pragma once

#include <vector>

namespace pedsyn {

// Two-component 1-D Gaussian mixture fit on per-sample losses; the lower
// mean component is "clean". Losses are min-max normalized before EM when
// normalize is set.
struct GmmSplitResult {
  std::vector<int> clean;   // indices with clean posterior > 0.5
  std::vector<int> noisy;
  std::vector<double> posterior_clean;  // per input index
  double mean[2] = {0, 0};  // [clean, noisy], in normalized space
  double var[2] = {0, 0};
  double weight[2] = {0, 0};
  bool converged = false;
  bool degenerate = false;       // no separation; everything declared clean
  bool median_fallback = false;  // EM failed; median split used
  int iterations = 0;
};

struct GmmOptions {
  int min_cluster_size = 2;
  bool normalize = true;
  int max_iterations = 100;
  double tol = 1e-6;
};

GmmSplitResult gmm_split(const std::vector<float>& losses, const GmmOptions& opts = {});

}  // namespace pedsyn
