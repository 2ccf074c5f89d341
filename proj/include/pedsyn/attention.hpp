#pragma once

#include <functional>
#include <string>

#include "pedsyn/tensor.hpp"

namespace pedsyn {

// Identifies one cross-attention computation inside a sampling run.
struct SiteKey {
  std::string layer_id;
  int step_index = 0;  // executed denoising steps, 0 = noisiest first

  bool operator==(const SiteKey& o) const { return layer_id == o.layer_id && step_index == o.step_index; }
  bool operator<(const SiteKey& o) const {
    if (step_index != o.step_index) return step_index < o.step_index;
    return layer_id < o.layer_id;
  }
};

// Captured record of one cross-attention computation. A holds the map that
// was actually used for the value product (post-controller).
struct AttentionSite {
  SiteKey key;
  Tensor q;  // (n_pixels, d)
  Tensor k;  // (n_tokens, d)
  Tensor v;  // (n_tokens, d_v)
  Tensor a;  // (n_pixels, n_tokens), row-stochastic
};

// Hooks controllers into a sampling run. override_kv runs before the map is
// computed (mutual attention); on_map may replace the computed map before
// the A*V product. Implementations are per-edit stateful and must not be
// shared across concurrent edits.
class AttentionController {
 public:
  virtual ~AttentionController() = default;
  // Return true to substitute k/v (both or neither).
  virtual bool override_kv(const SiteKey&, Tensor& /*k*/, Tensor& /*v*/) { return false; }
  // Receives the computed map; returns the map to use.
  virtual Tensor on_map(const SiteKey&, Tensor a) { return a; }
};

// Validates the row-stochastic invariant (each row sums to 1 +- tol).
void check_row_stochastic(const Tensor& a, float tol = 1e-6f, const char* where = "attention map");

// A = rowwise_softmax(Q K^T / sqrt(d)); out = A * V. If a controller is
// attached it may substitute K/V before the map is computed and/or replace
// the map before the product; the returned site records what was used.
struct CrossAttentionResult {
  Tensor output;  // (n_pixels, d_v)
  AttentionSite site;
};
CrossAttentionResult cross_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     AttentionController* controller = nullptr,
                                     const SiteKey& key = {});

}  // namespace pedsyn
