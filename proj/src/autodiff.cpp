#include "pedsyn/autodiff.hpp"

#include <cmath>
#include <memory>

namespace pedsyn::ad {

using kern::Exec;

static Exec ex() { return kern::default_exec(); }

Var Graph::make(Tensor value, bool needs_grad, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_ && needs_grad;
  if (n.needs_grad) {
    n.grad = Tensor(n.value.shape);
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Tensor v) { return make(std::move(v), false); }

Var Graph::param(Param& p) {
  Var v = make(p.value, true);
  nodes_[static_cast<size_t>(v.id)].external = &p;
  return v;
}

Var Graph::add(Var a, Var b) {
  check_same_shape(val(a), val(b), "add");
  Tensor out(val(a).shape);
  const auto& av = val(a).data;
  const auto& bv = val(b).data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av[i] + bv[i];
  bool ng = wants(a) || wants(b);
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, a, b, o] {
      const auto& g = grad_of(o).data;
      if (wants(a)) {
        auto& ga = mutable_grad(a).data;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(b)) {
        auto& gb = mutable_grad(b).data;
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    };
  return o;
}

Var Graph::sub(Var a, Var b) {
  check_same_shape(val(a), val(b), "sub");
  Tensor out(val(a).shape);
  const auto& av = val(a).data;
  const auto& bv = val(b).data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av[i] - bv[i];
  bool ng = wants(a) || wants(b);
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, a, b, o] {
      const auto& g = grad_of(o).data;
      if (wants(a)) {
        auto& ga = mutable_grad(a).data;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(b)) {
        auto& gb = mutable_grad(b).data;
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  return o;
}

Var Graph::mul(Var a, Var b) {
  check_same_shape(val(a), val(b), "mul");
  Tensor out(val(a).shape);
  const auto& av = val(a).data;
  const auto& bv = val(b).data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av[i] * bv[i];
  bool ng = wants(a) || wants(b);
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, a, b, o] {
      const auto& g = grad_of(o).data;
      if (wants(a)) {
        auto& ga = mutable_grad(a).data;
        const auto& bv2 = val(b).data;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (wants(b)) {
        auto& gb = mutable_grad(b).data;
        const auto& av2 = val(a).data;
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
      }
    };
  return o;
}

Var Graph::scale(Var a, float s) {
  Tensor out(val(a).shape);
  const auto& av = val(a).data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av[i] * s;
  Var o = make(std::move(out), wants(a));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, a, o, s] {
      const auto& g = grad_of(o).data;
      auto& ga = mutable_grad(a).data;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    };
  return o;
}

Var Graph::add_scalar(Var a, float s) {
  Tensor out(val(a).shape);
  const auto& av = val(a).data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av[i] + s;
  Var o = make(std::move(out), wants(a));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, a, o] {
      const auto& g = grad_of(o).data;
      auto& ga = mutable_grad(a).data;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
  return o;
}

Var Graph::linear(Var x, Var w, Var b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1))
    throw DimensionError("linear: got x" + xv.shape_str() + " w" + wv.shape_str());
  int n = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  Tensor out({n, out_dim});
  kern::matmul_bt(xv.ptr(), wv.ptr(), out.ptr(), n, in, out_dim, ex());
  if (b.valid()) {
    const auto& bv = val(b).data;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_dim; ++j) out.data[static_cast<size_t>(i) * out_dim + j] += bv[static_cast<size_t>(j)];
  }
  bool ng = wants(x) || wants(w) || (b.valid() && wants(b));
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, w, b, o, n, in, out_dim] {
      const Tensor& g = grad_of(o);
      if (wants(x)) {
        Tensor gx({n, in});
        kern::matmul(g.ptr(), val(w).ptr(), gx.ptr(), n, out_dim, in, ex());
        auto& acc = mutable_grad(x).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += gx.data[i];
      }
      if (wants(w)) {
        Tensor gw({out_dim, in});
        kern::matmul_at(g.ptr(), val(x).ptr(), gw.ptr(), n, out_dim, in, ex());
        auto& acc = mutable_grad(w).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += gw.data[i];
      }
      if (b.valid() && wants(b)) {
        auto& acc = mutable_grad(b).data;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < out_dim; ++j) acc[static_cast<size_t>(j)] += g.data[static_cast<size_t>(i) * out_dim + j];
      }
    };
  return o;
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0))
    throw DimensionError("matmul: got " + av.shape_str() + " x " + bv.shape_str());
  int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  kern::matmul(av.ptr(), bv.ptr(), out.ptr(), m, k, n, ex());
  bool ng = wants(a) || wants(b);
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, a, b, o, m, k, n] {
      const Tensor& g = grad_of(o);
      if (wants(a)) {
        Tensor ga({m, k});
        kern::matmul_bt(g.ptr(), val(b).ptr(), ga.ptr(), m, n, k, ex());
        auto& acc = mutable_grad(a).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += ga.data[i];
      }
      if (wants(b)) {
        Tensor gb({k, n});
        kern::matmul_at(val(a).ptr(), g.ptr(), gb.ptr(), m, k, n, ex());
        auto& acc = mutable_grad(b).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += gb.data[i];
      }
    };
  return o;
}

Var Graph::matmul_bt(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(1))
    throw DimensionError("matmul_bt: got " + av.shape_str() + " x " + bv.shape_str() + "^T");
  int m = av.dim(0), k = av.dim(1), n = bv.dim(0);
  Tensor out({m, n});
  kern::matmul_bt(av.ptr(), bv.ptr(), out.ptr(), m, k, n, ex());
  bool ng = wants(a) || wants(b);
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, a, b, o, m, k, n] {
      const Tensor& g = grad_of(o);
      if (wants(a)) {
        Tensor ga({m, k});
        kern::matmul(g.ptr(), val(b).ptr(), ga.ptr(), m, n, k, ex());
        auto& acc = mutable_grad(a).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += ga.data[i];
      }
      if (wants(b)) {
        Tensor gb({n, k});
        kern::matmul_at(g.ptr(), val(a).ptr(), gb.ptr(), m, n, k, ex());
        auto& acc = mutable_grad(b).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += gb.data[i];
      }
    };
  return o;
}

Var Graph::conv3x3(Var x, Var w, Var b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  if (xv.ndim() != 4 || wv.ndim() != 4 || wv.dim(1) != xv.dim(1))
    throw DimensionError("conv3x3: got x" + xv.shape_str() + " w" + wv.shape_str());
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3), oc = wv.dim(0);
  Tensor out({n, oc, h, wd});
  kern::conv3x3(xv.ptr(), wv.ptr(), b.valid() ? val(b).ptr() : nullptr, out.ptr(), n, c, h, wd, oc, ex());
  bool ng = wants(x) || wants(w) || (b.valid() && wants(b));
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, w, b, o, n, c, h, wd, oc] {
      const Tensor& g = grad_of(o);
      if (wants(x)) {
        Tensor gx({n, c, h, wd});
        kern::conv3x3_grad_input(g.ptr(), val(w).ptr(), gx.ptr(), n, c, h, wd, oc, ex());
        auto& acc = mutable_grad(x).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += gx.data[i];
      }
      if (wants(w) || (b.valid() && wants(b))) {
        Tensor gw({oc, c, 3, 3});
        Tensor gb({oc});
        kern::conv3x3_grad_weight(val(x).ptr(), g.ptr(), gw.ptr(), gb.ptr(), n, c, h, wd, oc, ex());
        if (wants(w)) {
          auto& acc = mutable_grad(w).data;
          for (size_t i = 0; i < acc.size(); ++i) acc[i] += gw.data[i];
        }
        if (b.valid() && wants(b)) {
          auto& acc = mutable_grad(b).data;
          for (size_t i = 0; i < acc.size(); ++i) acc[i] += gb.data[i];
        }
      }
    };
  return o;
}

Var Graph::conv1x1(Var x, Var w, Var b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  if (xv.ndim() != 4 || wv.ndim() != 2 || wv.dim(1) != xv.dim(1))
    throw DimensionError("conv1x1: got x" + xv.shape_str() + " w" + wv.shape_str());
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3), oc = wv.dim(0);
  int hw = h * wd;
  Tensor out({n, oc, h, wd});
  kern::conv1x1(xv.ptr(), wv.ptr(), b.valid() ? val(b).ptr() : nullptr, out.ptr(), n, c, hw, oc, ex());
  bool ng = wants(x) || wants(w) || (b.valid() && wants(b));
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, w, b, o, n, c, hw, oc] {
      const Tensor& g = grad_of(o);
      if (wants(x)) {
        Tensor gx(val(x).shape);
        kern::conv1x1_grad_input(g.ptr(), val(w).ptr(), gx.ptr(), n, c, hw, oc, ex());
        auto& acc = mutable_grad(x).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += gx.data[i];
      }
      if (wants(w) || (b.valid() && wants(b))) {
        Tensor gw({oc, c});
        Tensor gb({oc});
        kern::conv1x1_grad_weight(val(x).ptr(), g.ptr(), gw.ptr(), gb.ptr(), n, c, hw, oc, ex());
        if (wants(w)) {
          auto& acc = mutable_grad(w).data;
          for (size_t i = 0; i < acc.size(); ++i) acc[i] += gw.data[i];
        }
        if (b.valid() && wants(b)) {
          auto& acc = mutable_grad(b).data;
          for (size_t i = 0; i < acc.size(); ++i) acc[i] += gb.data[i];
        }
      }
    };
  return o;
}

Var Graph::silu(Var x) {
  Tensor out(val(x).shape);
  const auto& xv = val(x).data;
  for (size_t i = 0; i < out.data.size(); ++i) {
    float s = 1.f / (1.f + std::exp(-xv[i]));
    out.data[i] = xv[i] * s;
  }
  Var o = make(std::move(out), wants(x));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, o] {
      const auto& g = grad_of(o).data;
      const auto& xv2 = val(x).data;
      auto& gx = mutable_grad(x).data;
      for (size_t i = 0; i < g.size(); ++i) {
        float s = 1.f / (1.f + std::exp(-xv2[i]));
        gx[i] += g[i] * s * (1.f + xv2[i] * (1.f - s));
      }
    };
  return o;
}

Var Graph::relu(Var x) {
  Tensor out(val(x).shape);
  const auto& xv = val(x).data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv[i] > 0.f ? xv[i] : 0.f;
  Var o = make(std::move(out), wants(x));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, o] {
      const auto& g = grad_of(o).data;
      const auto& xv2 = val(x).data;
      auto& gx = mutable_grad(x).data;
      for (size_t i = 0; i < g.size(); ++i)
        if (xv2[i] > 0.f) gx[i] += g[i];
    };
  return o;
}

Var Graph::group_norm(Var x, Var gamma, Var beta, int groups, float eps) {
  const Tensor& xv = val(x);
  if (xv.ndim() != 4 || xv.dim(1) % groups != 0)
    throw DimensionError("group_norm: bad input " + xv.shape_str());
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor out(xv.shape);
  auto mean = std::make_shared<Tensor>(Tensor({n, groups}));
  auto var = std::make_shared<Tensor>(Tensor({n, groups}));
  kern::group_norm(xv.ptr(), val(gamma).ptr(), val(beta).ptr(), out.ptr(), mean->ptr(), var->ptr(),
                   n, c, h, w, groups, eps, ex());
  bool ng = wants(x) || wants(gamma) || wants(beta);
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, gamma, beta, o, n, c, h, w, groups, eps, mean, var] {
      const Tensor& g = grad_of(o);
      Tensor gx(val(x).shape);
      Tensor gga({c});
      Tensor gbe({c});
      kern::group_norm_grad(val(x).ptr(), val(gamma).ptr(), mean->ptr(), var->ptr(), g.ptr(),
                            gx.ptr(), gga.ptr(), gbe.ptr(), n, c, h, w, groups, eps, ex());
      if (wants(x)) {
        auto& acc = mutable_grad(x).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += gx.data[i];
      }
      if (wants(gamma)) {
        auto& acc = mutable_grad(gamma).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += gga.data[i];
      }
      if (wants(beta)) {
        auto& acc = mutable_grad(beta).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += gbe.data[i];
      }
    };
  return o;
}

Var Graph::softmax_rows(Var x) {
  const Tensor& xv = val(x);
  if (xv.ndim() != 2) throw DimensionError("softmax_rows: need 2-D input");
  int rows = xv.dim(0), cols = xv.dim(1);
  Tensor out(xv.shape);
  kern::softmax_rows(xv.ptr(), out.ptr(), rows, cols, ex());
  Var o = make(std::move(out), wants(x));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, o, rows, cols] {
      Tensor gx({rows, cols});
      kern::softmax_rows_grad(val(o).ptr(), grad_of(o).ptr(), gx.ptr(), rows, cols, ex());
      auto& acc = mutable_grad(x).data;
      for (size_t i = 0; i < acc.size(); ++i) acc[i] += gx.data[i];
    };
  return o;
}

Var Graph::avgpool2(Var x) {
  const Tensor& xv = val(x);
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor out({n, c, h / 2, w / 2});
  kern::avgpool2(xv.ptr(), out.ptr(), n, c, h, w, ex());
  Var o = make(std::move(out), wants(x));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, o, n, c, h, w] {
      Tensor gx({n, c, h, w});
      kern::avgpool2_grad(grad_of(o).ptr(), gx.ptr(), n, c, h, w, ex());
      auto& acc = mutable_grad(x).data;
      for (size_t i = 0; i < acc.size(); ++i) acc[i] += gx.data[i];
    };
  return o;
}

Var Graph::upsample2(Var x) {
  const Tensor& xv = val(x);
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor out({n, c, h * 2, w * 2});
  kern::upsample2(xv.ptr(), out.ptr(), n, c, h, w, ex());
  Var o = make(std::move(out), wants(x));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, o, n, c, h, w] {
      Tensor gx({n, c, h, w});
      kern::upsample2_grad(grad_of(o).ptr(), gx.ptr(), n, c, h, w, ex());
      auto& acc = mutable_grad(x).data;
      for (size_t i = 0; i < acc.size(); ++i) acc[i] += gx.data[i];
    };
  return o;
}

Var Graph::concat_ch(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.ndim() != 4 || bv.ndim() != 4 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) ||
      av.dim(3) != bv.dim(3))
    throw DimensionError("concat_ch: incompatible " + av.shape_str() + " / " + bv.shape_str());
  int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), h = av.dim(2), w = av.dim(3);
  int64_t hw = static_cast<int64_t>(h) * w;
  Tensor out({n, ca + cb, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy_n(av.ptr() + static_cast<int64_t>(i) * ca * hw, ca * hw,
                out.ptr() + static_cast<int64_t>(i) * (ca + cb) * hw);
    std::copy_n(bv.ptr() + static_cast<int64_t>(i) * cb * hw, cb * hw,
                out.ptr() + (static_cast<int64_t>(i) * (ca + cb) + ca) * hw);
  }
  bool ng = wants(a) || wants(b);
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, a, b, o, n, ca, cb, hw] {
      const Tensor& g = grad_of(o);
      if (wants(a)) {
        auto& acc = mutable_grad(a).data;
        for (int i = 0; i < n; ++i) {
          const float* src = g.ptr() + static_cast<int64_t>(i) * (ca + cb) * hw;
          float* dst = acc.data() + static_cast<int64_t>(i) * ca * hw;
          for (int64_t j = 0; j < ca * hw; ++j) dst[j] += src[j];
        }
      }
      if (wants(b)) {
        auto& acc = mutable_grad(b).data;
        for (int i = 0; i < n; ++i) {
          const float* src = g.ptr() + (static_cast<int64_t>(i) * (ca + cb) + ca) * hw;
          float* dst = acc.data() + static_cast<int64_t>(i) * cb * hw;
          for (int64_t j = 0; j < cb * hw; ++j) dst[j] += src[j];
        }
      }
    };
  return o;
}

Var Graph::add_nc(Var x, Var bias) {
  const Tensor& xv = val(x);
  const Tensor& bv = val(bias);
  if (xv.ndim() != 4 || bv.ndim() != 2 || bv.dim(0) != xv.dim(0) || bv.dim(1) != xv.dim(1))
    throw DimensionError("add_nc: incompatible " + xv.shape_str() + " / " + bv.shape_str());
  int n = xv.dim(0), c = xv.dim(1);
  int64_t hw = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
  Tensor out(xv.shape);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      float b = bv.data[static_cast<size_t>(i) * c + ch];
      const float* src = xv.ptr() + (static_cast<int64_t>(i) * c + ch) * hw;
      float* dst = out.ptr() + (static_cast<int64_t>(i) * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) dst[j] = src[j] + b;
    }
  bool ng = wants(x) || wants(bias);
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, bias, o, n, c, hw] {
      const Tensor& g = grad_of(o);
      if (wants(x)) {
        auto& acc = mutable_grad(x).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += g.data[i];
      }
      if (wants(bias)) {
        auto& acc = mutable_grad(bias).data;
        for (int i = 0; i < n; ++i)
          for (int ch = 0; ch < c; ++ch) {
            const float* src = g.ptr() + (static_cast<int64_t>(i) * c + ch) * hw;
            float s = 0.f;
            for (int64_t j = 0; j < hw; ++j) s += src[j];
            acc[static_cast<size_t>(i) * c + ch] += s;
          }
      }
    };
  return o;
}

Var Graph::pix(Var x, int sample) {
  const Tensor& xv = val(x);
  if (xv.ndim() != 4) throw DimensionError("pix: need NCHW");
  int c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  int hw = h * w;
  Tensor out({hw, c});
  const float* base = xv.ptr() + static_cast<int64_t>(sample) * c * hw;
  for (int ch = 0; ch < c; ++ch)
    for (int p = 0; p < hw; ++p) out.data[static_cast<size_t>(p) * c + ch] = base[static_cast<int64_t>(ch) * hw + p];
  Var o = make(std::move(out), wants(x));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, o, sample, c, hw] {
      const Tensor& g = grad_of(o);
      auto& acc = mutable_grad(x).data;
      float* base2 = acc.data() + static_cast<int64_t>(sample) * c * hw;
      for (int ch = 0; ch < c; ++ch)
        for (int p = 0; p < hw; ++p) base2[static_cast<int64_t>(ch) * hw + p] += g.data[static_cast<size_t>(p) * c + ch];
    };
  return o;
}

Var Graph::unpix(const std::vector<Var>& pixels, int c, int h, int w) {
  int n = static_cast<int>(pixels.size());
  int hw = h * w;
  Tensor out({n, c, h, w});
  bool ng = false;
  for (int i = 0; i < n; ++i) {
    const Tensor& p = val(pixels[static_cast<size_t>(i)]);
    if (p.ndim() != 2 || p.dim(0) != hw || p.dim(1) != c)
      throw DimensionError("unpix: bad pixel matrix " + p.shape_str());
    float* base = out.ptr() + static_cast<int64_t>(i) * c * hw;
    for (int ch = 0; ch < c; ++ch)
      for (int q = 0; q < hw; ++q) base[static_cast<int64_t>(ch) * hw + q] = p.data[static_cast<size_t>(q) * c + ch];
    ng = ng || wants(pixels[static_cast<size_t>(i)]);
  }
  auto parents = pixels;
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, parents, o, c, hw] {
      const Tensor& g = grad_of(o);
      for (size_t i = 0; i < parents.size(); ++i) {
        if (!wants(parents[i])) continue;
        auto& acc = mutable_grad(parents[i]).data;
        const float* base = g.ptr() + static_cast<int64_t>(i) * c * hw;
        for (int ch = 0; ch < c; ++ch)
          for (int q = 0; q < hw; ++q) acc[static_cast<size_t>(q) * c + ch] += base[static_cast<int64_t>(ch) * hw + q];
      }
    };
  return o;
}

Var Graph::embedding(Var table, std::vector<int> ids) {
  const Tensor& tv = val(table);
  if (tv.ndim() != 2) throw DimensionError("embedding: table must be 2-D");
  int d = tv.dim(1);
  int n = static_cast<int>(ids.size());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    int id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= tv.dim(0)) throw ValidationError("embedding: id out of range");
    std::copy_n(tv.ptr() + static_cast<int64_t>(id) * d, d, out.ptr() + static_cast<int64_t>(i) * d);
  }
  Var o = make(std::move(out), wants(table));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, table, o, ids, d] {
      const Tensor& g = grad_of(o);
      auto& acc = mutable_grad(table).data;
      for (size_t i = 0; i < ids.size(); ++i) {
        float* dst = acc.data() + static_cast<int64_t>(ids[i]) * d;
        const float* src = g.ptr() + static_cast<int64_t>(i) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  return o;
}

Var Graph::concat_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ValidationError("concat_rows: empty input");
  int d = val(rows[0]).dim(1);
  int total = 0;
  bool ng = false;
  for (Var r : rows) {
    if (val(r).ndim() != 2 || val(r).dim(1) != d) throw DimensionError("concat_rows: column mismatch");
    total += val(r).dim(0);
    ng = ng || wants(r);
  }
  Tensor out({total, d});
  int at = 0;
  for (Var r : rows) {
    const Tensor& v = val(r);
    std::copy_n(v.ptr(), v.numel(), out.ptr() + static_cast<int64_t>(at) * d);
    at += v.dim(0);
  }
  auto parents = rows;
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, parents, o, d] {
      const Tensor& g = grad_of(o);
      int at2 = 0;
      for (Var r : parents) {
        int rn = val(r).dim(0);
        if (wants(r)) {
          auto& acc = mutable_grad(r).data;
          const float* src = g.ptr() + static_cast<int64_t>(at2) * d;
          for (int64_t j = 0; j < static_cast<int64_t>(rn) * d; ++j) acc[static_cast<size_t>(j)] += src[j];
        }
        at2 += rn;
      }
    };
  return o;
}

Var Graph::mean_all(Var x) {
  const Tensor& xv = val(x);
  double s = 0.0;
  for (float v : xv.data) s += v;
  float inv_n = 1.f / static_cast<float>(xv.numel());
  Tensor out({1});
  out.data[0] = static_cast<float>(s) * inv_n;
  Var o = make(std::move(out), wants(x));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, o, inv_n] {
      float g = grad_of(o).data[0] * inv_n;
      auto& acc = mutable_grad(x).data;
      for (auto& v : acc) v += g;
    };
  return o;
}

Var Graph::sum_all(Var x) {
  const Tensor& xv = val(x);
  double s = 0.0;
  for (float v : xv.data) s += v;
  Tensor out({1});
  out.data[0] = static_cast<float>(s);
  Var o = make(std::move(out), wants(x));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, o] {
      float g = grad_of(o).data[0];
      auto& acc = mutable_grad(x).data;
      for (auto& v : acc) v += g;
    };
  return o;
}

Var Graph::spatial_mean(Var x) {
  const Tensor& xv = val(x);
  if (xv.ndim() != 4) throw DimensionError("spatial_mean: need NCHW");
  int n = xv.dim(0), c = xv.dim(1);
  int64_t hw = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
  Tensor out({n, c});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const float* src = xv.ptr() + (static_cast<int64_t>(i) * c + ch) * hw;
      float s = 0.f;
      for (int64_t j = 0; j < hw; ++j) s += src[j];
      out.data[static_cast<size_t>(i) * c + ch] = s / static_cast<float>(hw);
    }
  Var o = make(std::move(out), wants(x));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, o, n, c, hw] {
      const Tensor& g = grad_of(o);
      auto& acc = mutable_grad(x).data;
      float inv = 1.f / static_cast<float>(hw);
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
          float gv = g.data[static_cast<size_t>(i) * c + ch] * inv;
          float* dst = acc.data() + (static_cast<int64_t>(i) * c + ch) * hw;
          for (int64_t j = 0; j < hw; ++j) dst[j] += gv;
        }
    };
  return o;
}

Var Graph::mean_rows(Var x) {
  const Tensor& xv = val(x);
  if (xv.ndim() != 2) throw DimensionError("mean_rows: need 2-D input");
  int t = xv.dim(0), d = xv.dim(1);
  Tensor out({1, d});
  for (int j = 0; j < d; ++j) {
    float s = 0.f;
    for (int i = 0; i < t; ++i) s += xv.data[static_cast<size_t>(i) * d + j];
    out.data[static_cast<size_t>(j)] = s / static_cast<float>(t);
  }
  Var o = make(std::move(out), wants(x));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, o, t, d] {
      const Tensor& g = grad_of(o);
      auto& acc = mutable_grad(x).data;
      float inv = 1.f / static_cast<float>(t);
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) acc[static_cast<size_t>(i) * d + j] += g.data[static_cast<size_t>(j)] * inv;
    };
  return o;
}

Var Graph::mul_scalar_var(Var x, Var s) {
  if (val(s).numel() != 1) throw DimensionError("mul_scalar_var: scale must be scalar");
  float sv = val(s).data[0];
  Tensor out(val(x).shape);
  const auto& xv = val(x).data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv[i] * sv;
  bool ng = wants(x) || wants(s);
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, s, o] {
      const auto& g = grad_of(o).data;
      if (wants(x)) {
        float sv2 = val(s).data[0];
        auto& acc = mutable_grad(x).data;
        for (size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * sv2;
      }
      if (wants(s)) {
        const auto& xv2 = val(x).data;
        float acc = 0.f;
        for (size_t i = 0; i < g.size(); ++i) acc += g[i] * xv2[i];
        mutable_grad(s).data[0] += acc;
      }
    };
  return o;
}

Var Graph::mse(Var a, Var b) {
  check_same_shape(val(a), val(b), "mse");
  const auto& av = val(a).data;
  const auto& bv = val(b).data;
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    double d = static_cast<double>(av[i]) - bv[i];
    s += d * d;
  }
  float inv_n = 1.f / static_cast<float>(av.size());
  Tensor out({1});
  out.data[0] = static_cast<float>(s) * inv_n;
  bool ng = wants(a) || wants(b);
  Var o = make(std::move(out), ng);
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, a, b, o, inv_n] {
      float g = grad_of(o).data[0] * 2.f * inv_n;
      const auto& av2 = val(a).data;
      const auto& bv2 = val(b).data;
      if (wants(a)) {
        auto& acc = mutable_grad(a).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += g * (av2[i] - bv2[i]);
      }
      if (wants(b)) {
        auto& acc = mutable_grad(b).data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] -= g * (av2[i] - bv2[i]);
      }
    };
  return o;
}

Var Graph::l2norm_rows(Var x) {
  const Tensor& xv = val(x);
  if (xv.ndim() != 2) throw DimensionError("l2norm_rows: need 2-D input");
  int n = xv.dim(0), d = xv.dim(1);
  Tensor out(xv.shape);
  auto norms = std::make_shared<std::vector<float>>(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const float* src = xv.ptr() + static_cast<int64_t>(i) * d;
    float s = 0.f;
    for (int j = 0; j < d; ++j) s += src[j] * src[j];
    float nr = std::sqrt(s) + 1e-12f;
    (*norms)[static_cast<size_t>(i)] = nr;
    float inv = 1.f / nr;
    float* dst = out.ptr() + static_cast<int64_t>(i) * d;
    for (int j = 0; j < d; ++j) dst[j] = src[j] * inv;
  }
  Var o = make(std::move(out), wants(x));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, x, o, n, d, norms] {
      const Tensor& g = grad_of(o);
      const Tensor& y = val(o);
      auto& acc = mutable_grad(x).data;
      for (int i = 0; i < n; ++i) {
        const float* gr = g.ptr() + static_cast<int64_t>(i) * d;
        const float* yr = y.ptr() + static_cast<int64_t>(i) * d;
        float dot = 0.f;
        for (int j = 0; j < d; ++j) dot += gr[j] * yr[j];
        float inv = 1.f / (*norms)[static_cast<size_t>(i)];
        float* dst = acc.data() + static_cast<int64_t>(i) * d;
        for (int j = 0; j < d; ++j) dst[j] += (gr[j] - dot * yr[j]) * inv;
      }
    };
  return o;
}

Var Graph::cross_entropy_rows(Var logits, const Tensor& targets) {
  const Tensor& lv = val(logits);
  if (lv.ndim() != 2 || !lv.same_shape(targets))
    throw DimensionError("cross_entropy_rows: logits/targets mismatch");
  int n = lv.dim(0), c = lv.dim(1);
  // log-softmax, stable.
  auto probs = std::make_shared<Tensor>(Tensor(lv.shape));
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* row = lv.ptr() + static_cast<int64_t>(i) * c;
    float mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    double logz = std::log(z) + mx;
    const float* trow = targets.ptr() + static_cast<int64_t>(i) * c;
    float* prow = probs->ptr() + static_cast<int64_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      double logp = static_cast<double>(row[j]) - logz;
      prow[j] = static_cast<float>(std::exp(logp));
      loss -= static_cast<double>(trow[j]) * logp;
    }
  }
  Tensor out({1});
  out.data[0] = static_cast<float>(loss / n);
  auto tg = std::make_shared<Tensor>(targets);
  Var o = make(std::move(out), wants(logits));
  if (nodes_[static_cast<size_t>(o.id)].needs_grad)
    nodes_[static_cast<size_t>(o.id)].back = [this, logits, o, probs, tg, n, c] {
      float g = grad_of(o).data[0] / static_cast<float>(n);
      auto& acc = mutable_grad(logits).data;
      for (int64_t i = 0; i < static_cast<int64_t>(n) * c; ++i)
        acc[static_cast<size_t>(i)] += g * (probs->data[static_cast<size_t>(i)] - tg->data[static_cast<size_t>(i)]);
    };
  return o;
}

void Graph::backward(Var root) {
  if (!grad_) throw ValidationError("backward called on a no-grad graph");
  Node& r = nodes_[static_cast<size_t>(root.id)];
  if (r.value.numel() != 1) throw ValidationError("backward root must be scalar");
  if (!r.needs_grad) return;
  r.grad.data[0] = 1.f;
  for (int i = root.id; i >= 0; --i) {
    Node& nd = nodes_[static_cast<size_t>(i)];
    if (nd.needs_grad && nd.back) nd.back();
  }
  // Flush into external parameter accumulators.
  for (auto& nd : nodes_) {
    if (nd.external && nd.needs_grad)
      for (size_t i = 0; i < nd.grad.data.size(); ++i) nd.external->grad.data[i] += nd.grad.data[i];
  }
}

void Adam::step(const std::vector<Param*>& params) {
  if (bound_.empty()) {
    bound_ = params;
    states_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      states_[i].m = Tensor(params[i]->value.shape);
      states_[i].v = Tensor(params[i]->value.shape);
    }
  }
  ++t_;
  float bc1 = 1.f - std::pow(beta1_, static_cast<float>(t_));
  float bc2 = 1.f - std::pow(beta2_, static_cast<float>(t_));
  for (size_t p = 0; p < bound_.size(); ++p) {
    Param* pr = bound_[p];
    auto& m = states_[p].m.data;
    auto& v = states_[p].v.data;
    for (size_t i = 0; i < pr->value.data.size(); ++i) {
      float g = pr->grad.data[i];
      m[i] = beta1_ * m[i] + (1.f - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.f - beta2_) * g * g;
      float mh = m[i] / bc1;
      float vh = v[i] / bc2;
      pr->value.data[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

}  // namespace pedsyn::ad
