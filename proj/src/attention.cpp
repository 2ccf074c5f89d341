#include "pedsyn/attention.hpp"

#include <cmath>

#include "pedsyn/kernels.hpp"

namespace pedsyn {

void check_row_stochastic(const Tensor& a, float tol, const char* where) {
  if (a.ndim() != 2) throw DimensionError(std::string(where) + ": map must be 2-D");
  int rows = a.dim(0), cols = a.dim(1);
  for (int i = 0; i < rows; ++i) {
    float s = 0.f;
    for (int j = 0; j < cols; ++j) {
      float v = a.data[static_cast<size_t>(i) * cols + j];
      if (v < -tol) throw ValidationError(std::string(where) + ": negative attention weight");
      s += v;
    }
    if (std::fabs(s - 1.f) > tol)
      throw ValidationError(std::string(where) + ": row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
}

CrossAttentionResult cross_attention(const Tensor& q, const Tensor& k_in, const Tensor& v_in,
                                     AttentionController* controller, const SiteKey& key) {
  Tensor k = k_in, v = v_in;
  if (controller) {
    Tensor k2 = k, v2 = v;
    if (controller->override_kv(key, k2, v2)) {
      k = std::move(k2);
      v = std::move(v2);
    }
  }
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2)
    throw DimensionError("cross_attention: Q/K/V must be 2-D");
  int np = q.dim(0), d = q.dim(1);
  int nt = k.dim(0);
  if (d <= 0) throw DimensionError("cross_attention: d must be positive");
  if (k.dim(1) != d)
    throw DimensionError("cross_attention: K dim " + k.shape_str() + " vs Q " + q.shape_str());
  if (v.dim(0) != nt)
    throw DimensionError("cross_attention: V rows " + v.shape_str() + " vs K " + k.shape_str());
  int dv = v.dim(1);

  Tensor logits({np, nt});
  kern::matmul_bt(q.ptr(), k.ptr(), logits.ptr(), np, d, nt, kern::default_exec());
  float inv = 1.f / std::sqrt(static_cast<float>(d));
  for (auto& x : logits.data) x *= inv;

  Tensor a({np, nt});
  kern::softmax_rows(logits.ptr(), a.ptr(), np, nt, kern::default_exec());

  if (controller) {
    Tensor replaced = controller->on_map(key, a);
    if (replaced.ndim() != 2 || replaced.dim(0) != np || replaced.dim(1) != nt)
      throw DimensionError("controller map has shape " + replaced.shape_str() + ", expected (" +
                           std::to_string(np) + "," + std::to_string(nt) + ")");
    check_row_stochastic(replaced, 1e-6f, "controller map");
    a = std::move(replaced);
  }

  Tensor out({np, dv});
  kern::matmul(a.ptr(), v.ptr(), out.ptr(), np, a.dim(1), dv, kern::default_exec());

  CrossAttentionResult res;
  res.output = std::move(out);
  res.site.key = key;
  res.site.q = q;
  res.site.k = k;
  res.site.v = v;
  res.site.a = a;
  return res;
}

}  // namespace pedsyn
