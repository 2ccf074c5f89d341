#include "pedsyn/gmm.hpp"

#include <algorithm>
#include <cmath>

#include "pedsyn/error.hpp"

namespace pedsyn {

namespace {

double quantile(std::vector<double> sorted, double q) {
  double pos = q * (static_cast<double>(sorted.size()) - 1);
  size_t lo = static_cast<size_t>(pos);
  size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1 - frac) + sorted[hi] * frac;
}

double log_gauss(double x, double mean, double var) {
  double d = x - mean;
  return -0.5 * (std::log(2.0 * M_PI * var) + d * d / var);
}

}  // namespace

GmmSplitResult gmm_split(const std::vector<float>& losses, const GmmOptions& opts) {
  int n = static_cast<int>(losses.size());
  if (n < 2 * opts.min_cluster_size)
    throw ValidationError("gmm_split: need at least " + std::to_string(2 * opts.min_cluster_size) +
                          " samples");
  for (float v : losses)
    if (!std::isfinite(v)) throw ValidationError("gmm_split: losses must be finite");

  GmmSplitResult res;
  std::vector<double> x(losses.begin(), losses.end());
  double lo = *std::min_element(x.begin(), x.end());
  double hi = *std::max_element(x.begin(), x.end());

  if (hi - lo < 1e-12) {
    // No separation at all: declare everything clean.
    res.degenerate = true;
    res.posterior_clean.assign(static_cast<size_t>(n), 1.0);
    for (int i = 0; i < n; ++i) res.clean.push_back(i);
    return res;
  }
  if (opts.normalize)
    for (auto& v : x) v = (v - lo) / (hi - lo);

  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  double mu0 = quantile(sorted, 0.25);
  double mu1 = quantile(sorted, 0.75);
  double gv = 0, gm = 0;
  for (double v : x) gm += v;
  gm /= n;
  for (double v : x) gv += (v - gm) * (v - gm);
  gv = std::max(gv / n, 1e-6);
  double var0 = gv, var1 = gv;
  double w0 = 0.5, w1 = 0.5;

  std::vector<double> r0(static_cast<size_t>(n));
  double prev_ll = -1e300;
  int it = 0;
  bool converged = false;
  for (; it < opts.max_iterations; ++it) {
    // E step
    double ll = 0;
    for (int i = 0; i < n; ++i) {
      double l0 = std::log(w0) + log_gauss(x[static_cast<size_t>(i)], mu0, var0);
      double l1 = std::log(w1) + log_gauss(x[static_cast<size_t>(i)], mu1, var1);
      double mx = std::max(l0, l1);
      double z = std::exp(l0 - mx) + std::exp(l1 - mx);
      r0[static_cast<size_t>(i)] = std::exp(l0 - mx) / z;
      ll += mx + std::log(z);
    }
    // M step
    double n0 = 0, s0 = 0, s1 = 0;
    for (int i = 0; i < n; ++i) {
      n0 += r0[static_cast<size_t>(i)];
      s0 += r0[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
      s1 += (1 - r0[static_cast<size_t>(i)]) * x[static_cast<size_t>(i)];
    }
    double n1 = n - n0;
    if (n0 < 1e-9 || n1 < 1e-9) break;  // one component vanished
    mu0 = s0 / n0;
    mu1 = s1 / n1;
    double v0 = 0, v1 = 0;
    for (int i = 0; i < n; ++i) {
      double d0 = x[static_cast<size_t>(i)] - mu0;
      double d1 = x[static_cast<size_t>(i)] - mu1;
      v0 += r0[static_cast<size_t>(i)] * d0 * d0;
      v1 += (1 - r0[static_cast<size_t>(i)]) * d1 * d1;
    }
    var0 = std::max(v0 / n0, 1e-8);
    var1 = std::max(v1 / n1, 1e-8);
    w0 = n0 / n;
    w1 = n1 / n;
    if (std::fabs(ll - prev_ll) < opts.tol * std::max(1.0, std::fabs(prev_ll))) {
      converged = true;
      break;
    }
    prev_ll = ll;
  }

  res.iterations = it;
  res.converged = converged;
  if (!converged && it >= opts.max_iterations) {
    // Median split fallback: lower half is clean.
    res.median_fallback = true;
    double med = quantile(sorted, 0.5);
    res.posterior_clean.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
      bool clean = x[static_cast<size_t>(i)] <= med;
      res.posterior_clean[static_cast<size_t>(i)] = clean ? 1.0 : 0.0;
      (clean ? res.clean : res.noisy).push_back(i);
    }
    return res;
  }

  // Clean = lower-mean component.
  bool comp0_clean = mu0 <= mu1;
  res.mean[0] = comp0_clean ? mu0 : mu1;
  res.mean[1] = comp0_clean ? mu1 : mu0;
  res.var[0] = comp0_clean ? var0 : var1;
  res.var[1] = comp0_clean ? var1 : var0;
  res.weight[0] = comp0_clean ? w0 : w1;
  res.weight[1] = comp0_clean ? w1 : w0;
  res.posterior_clean.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double p = comp0_clean ? r0[static_cast<size_t>(i)] : 1.0 - r0[static_cast<size_t>(i)];
    res.posterior_clean[static_cast<size_t>(i)] = p;
    (p > 0.5 ? res.clean : res.noisy).push_back(i);
  }
  return res;
}

}  // namespace pedsyn
