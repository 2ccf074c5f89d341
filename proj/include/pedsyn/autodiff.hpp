#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pedsyn/kernels.hpp"
#include "pedsyn/tensor.hpp"

namespace pedsyn::ad {

// Named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor(value.shape);
  }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.f); }
};

// Define-by-run reverse-mode tape. One Graph per forward pass; nodes are
// evaluated eagerly and the backward closures replay in reverse order.
class Graph {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  explicit Graph(bool grad_enabled = true) : grad_(grad_enabled) {}

  bool grad_enabled() const { return grad_; }

  Var constant(Tensor v);
  Var param(Param& p);

  const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  const Tensor& grad_of(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, float s);
  Var add_scalar(Var a, float s);

  // y = x W^T + b;  x (N,in), W (out,in), b (out) or invalid Var.
  Var linear(Var x, Var w, Var b);
  Var matmul(Var a, Var b);     // (M,K)x(K,N)
  Var matmul_bt(Var a, Var b);  // (M,K)x(N,K)^T -> (M,N)

  Var conv3x3(Var x, Var w, Var b);  // x (N,C,H,W), w (OC,C,3,3)
  Var conv1x1(Var x, Var w, Var b);  // w (OC,C)

  Var silu(Var x);
  Var relu(Var x);
  Var group_norm(Var x, Var gamma, Var beta, int groups, float eps = 1e-5f);
  Var softmax_rows(Var x);
  Var avgpool2(Var x);
  Var upsample2(Var x);
  Var concat_ch(Var a, Var b);
  // x (N,C,H,W) + bias (N,C) broadcast over spatial dims.
  Var add_nc(Var x, Var bias);

  // Sample i of an (N,C,H,W) tensor as a (H*W, C) pixel matrix and back.
  Var pix(Var x, int sample);
  Var unpix(const std::vector<Var>& pixels, int c, int h, int w);

  Var embedding(Var table, std::vector<int> ids);
  Var concat_rows(const std::vector<Var>& rows);

  Var mean_all(Var x);
  Var sum_all(Var x);
  // (N,C,H,W) -> (N,C) mean over spatial dims.
  Var spatial_mean(Var x);
  // (T,D) -> (1,D) mean over rows.
  Var mean_rows(Var x);
  // x * s where s is a scalar Var (shape {1}).
  Var mul_scalar_var(Var x, Var s);
  // mean((a-b)^2) over all elements.
  Var mse(Var a, Var b);
  // Rows of x L2-normalized.
  Var l2norm_rows(Var x);
  // -(1/rows) * sum targets .* log_softmax(logits); targets is a constant.
  Var cross_entropy_rows(Var logits, const Tensor& targets);

  void backward(Var root);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void()> back;
    Param* external = nullptr;
  };

  Var make(Tensor value, bool needs_grad, std::function<void()> back = nullptr);
  Tensor& mutable_grad(Var v) { return nodes_[static_cast<size_t>(v.id)].grad; }
  bool wants(Var v) const { return grad_ && nodes_[static_cast<size_t>(v.id)].needs_grad; }

  std::vector<Node> nodes_;
  bool grad_;
};

using Var = Graph::Var;

// Adam with optional weight decay; state is kept per parameter by name.
class Adam {
 public:
  explicit Adam(float lr = 1e-3f, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(float lr) { lr_ = lr; }
  float lr() const { return lr_; }

  void step(const std::vector<Param*>& params);

 private:
  struct State {
    Tensor m, v;
  };
  float lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<State> states_;
  std::vector<Param*> bound_;
};

}  // namespace pedsyn::ad
