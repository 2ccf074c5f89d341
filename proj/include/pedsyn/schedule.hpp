#pragma once

#include <cmath>
#include <vector>

#include "pedsyn/error.hpp"

namespace pedsyn {

// Variance-preserving schedule: alpha_t^2 + sigma_t^2 = 1, alpha monotone
// non-increasing, alpha_0 = 1 (clean end). Index t runs 0..T inclusive.
// omega_t is the per-step loss weight (clamped signal-to-noise ratio).
struct NoiseSchedule {
  int steps = 0;  // T
  std::vector<float> alpha;
  std::vector<float> sigma;
  std::vector<float> omega;

  // Truncated cosine: alpha_t = cos(pi/2 * (t/T) * trunc). trunc < 1 keeps
  // alpha_T strictly positive so the clean-image prediction stays finite.
  static NoiseSchedule cosine(int t_steps, float trunc = 0.98f, float omega_max = 5.f) {
    if (t_steps < 1) throw ValidationError("schedule needs at least 1 step");
    NoiseSchedule s;
    s.steps = t_steps;
    s.alpha.resize(static_cast<size_t>(t_steps) + 1);
    s.sigma.resize(static_cast<size_t>(t_steps) + 1);
    s.omega.resize(static_cast<size_t>(t_steps) + 1);
    for (int t = 0; t <= t_steps; ++t) {
      double u = static_cast<double>(t) / t_steps * trunc;
      double a = std::cos(M_PI_2 * u);
      double sg = std::sin(M_PI_2 * u);
      s.alpha[static_cast<size_t>(t)] = static_cast<float>(a);
      s.sigma[static_cast<size_t>(t)] = static_cast<float>(sg);
      double snr = sg > 0 ? (a * a) / (sg * sg) : static_cast<double>(omega_max);
      s.omega[static_cast<size_t>(t)] = static_cast<float>(std::min(snr, static_cast<double>(omega_max)));
    }
    return s;
  }

  void validate() const {
    if (steps < 1 || alpha.size() != static_cast<size_t>(steps) + 1 || !same_sizes())
      throw ValidationError("schedule: inconsistent sizes");
    for (int t = 0; t <= steps; ++t) {
      float a = alpha[static_cast<size_t>(t)], sg = sigma[static_cast<size_t>(t)];
      if (a < 0.f || a > 1.f || sg < 0.f || sg > 1.f)
        throw ValidationError("schedule: alpha/sigma out of [0,1]");
      if (std::fabs(a * a + sg * sg - 1.f) > 1e-5f)
        throw ValidationError("schedule: not variance preserving");
      if (t > 0 && a > alpha[static_cast<size_t>(t) - 1] + 1e-7f)
        throw ValidationError("schedule: alpha not monotone");
    }
  }

  // Evenly strided sub-schedule indices for n-step sampling, descending from
  // T down to 0: e.g. T=50, n=10 -> 50,45,...,5,0.
  std::vector<int> sample_indices(int n) const {
    if (n < 1 || n > steps) throw ValidationError("sample steps out of range");
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
      int t = static_cast<int>(std::llround(static_cast<double>(steps) * (n - i) / n));
      idx.push_back(t);
    }
    return idx;
  }

 private:
  bool same_sizes() const { return alpha.size() == sigma.size() && sigma.size() == omega.size(); }
};

}  // namespace pedsyn
