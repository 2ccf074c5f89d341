#include "pedsyn/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace pedsyn::kern {

namespace {
std::atomic<Exec> g_exec{Exec::Parallel};
}

Exec default_exec() { return g_exec.load(std::memory_order_relaxed); }
void set_default_exec(Exec e) { g_exec.store(e, std::memory_order_relaxed); }

// ---------------------------------------------------------------- matmul --

static void matmul_rows(const float* a, const float* b, float* c, int k, int n,
                        int i0, int i1) {
  for (int i = i0; i < i1; ++i) {
    float* crow = c + static_cast<int64_t>(i) * n;
    std::memset(crow, 0, sizeof(float) * static_cast<size_t>(n));
    const float* arow = a + static_cast<int64_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      float av = arow[p];
      const float* brow = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul(const float* a, const float* b, float* c, int m, int k, int n, Exec exec) {
  if (exec == Exec::Serial) {
    matmul_rows(a, b, c, k, n, 0, m);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) matmul_rows(a, b, c, k, n, i, i + 1);
}

void matmul_bt(const float* a, const float* bt, float* c, int m, int k, int n, Exec exec) {
  auto row = [&](int i) {
    const float* arow = a + static_cast<int64_t>(i) * k;
    float* crow = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = bt + static_cast<int64_t>(j) * k;
      float acc = 0.f;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  };
  if (exec == Exec::Serial) {
    for (int i = 0; i < m; ++i) row(i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) row(i);
}

void matmul_at(const float* a, const float* g, float* c, int m, int k, int n, Exec exec) {
  // c[p][j] = sum_i a[i][p] * g[i][j]; partition by p so each output row is
  // owned by one thread and accumulation over i stays in serial order.
  auto row = [&](int p) {
    float* crow = c + static_cast<int64_t>(p) * n;
    std::memset(crow, 0, sizeof(float) * static_cast<size_t>(n));
    for (int i = 0; i < m; ++i) {
      float av = a[static_cast<int64_t>(i) * k + p];
      const float* grow = g + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  };
  if (exec == Exec::Serial) {
    for (int p = 0; p < k; ++p) row(p);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int p = 0; p < k; ++p) row(p);
}

// ------------------------------------------------------------------ conv --

static void conv3x3_one(const float* x, const float* w, const float* bias, float* y,
                        int c, int h, int wdt, int oc, int img, int ochan) {
  const float* xin = x + static_cast<int64_t>(img) * c * h * wdt;
  float* yout = y + (static_cast<int64_t>(img) * oc + ochan) * h * wdt;
  float bv = bias ? bias[ochan] : 0.f;
  for (int i = 0; i < h * wdt; ++i) yout[i] = bv;
  for (int ic = 0; ic < c; ++ic) {
    const float* xc = xin + static_cast<int64_t>(ic) * h * wdt;
    const float* wk = w + (static_cast<int64_t>(ochan) * c + ic) * 9;
    for (int oh = 0; oh < h; ++oh) {
      float* yrow = yout + static_cast<int64_t>(oh) * wdt;
      for (int kh = 0; kh < 3; ++kh) {
        int ih = oh + kh - 1;
        if (ih < 0 || ih >= h) continue;
        const float* xrow = xc + static_cast<int64_t>(ih) * wdt;
        for (int kw = 0; kw < 3; ++kw) {
          float wv = wk[kh * 3 + kw];
          int off = kw - 1;
          int lo = off < 0 ? 1 : 0;
          int hi = off > 0 ? wdt - 1 : wdt;
          for (int ow = lo; ow < hi; ++ow) yrow[ow] += wv * xrow[ow + off];
        }
      }
    }
  }
}

void conv3x3(const float* x, const float* w, const float* bias, float* y,
             int n, int c, int h, int wdt, int oc, Exec exec) {
  if (exec == Exec::Serial) {
    for (int img = 0; img < n; ++img)
      for (int ochan = 0; ochan < oc; ++ochan) conv3x3_one(x, w, bias, y, c, h, wdt, oc, img, ochan);
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int img = 0; img < n; ++img)
    for (int ochan = 0; ochan < oc; ++ochan) conv3x3_one(x, w, bias, y, c, h, wdt, oc, img, ochan);
}

// Input gradient of the 3x3 conv is a correlation with the flipped kernel;
// computed per (image, input channel) so each gx element has one owner.
static void conv3x3_gi_one(const float* gy, const float* w, float* gx,
                           int c, int h, int wdt, int oc, int img, int ic) {
  float* gxc = gx + (static_cast<int64_t>(img) * c + ic) * h * wdt;
  std::memset(gxc, 0, sizeof(float) * static_cast<size_t>(h) * wdt);
  for (int ochan = 0; ochan < oc; ++ochan) {
    const float* gyc = gy + (static_cast<int64_t>(img) * oc + ochan) * h * wdt;
    const float* wk = w + (static_cast<int64_t>(ochan) * c + ic) * 9;
    for (int ih = 0; ih < h; ++ih) {
      float* gxrow = gxc + static_cast<int64_t>(ih) * wdt;
      for (int kh = 0; kh < 3; ++kh) {
        int oh = ih - kh + 1;
        if (oh < 0 || oh >= h) continue;
        const float* gyrow = gyc + static_cast<int64_t>(oh) * wdt;
        for (int kw = 0; kw < 3; ++kw) {
          float wv = wk[kh * 3 + kw];
          // ow = iw - (kw - 1)
          int off = kw - 1;
          int lo = off > 0 ? off : 0;
          int hi = off < 0 ? wdt + off : wdt;
          const float* gsrc = gyrow - off;
          for (int iw = lo; iw < hi; ++iw) gxrow[iw] += wv * gsrc[iw];
        }
      }
    }
  }
}

void conv3x3_grad_input(const float* gy, const float* w, float* gx,
                        int n, int c, int h, int wdt, int oc, Exec exec) {
  if (exec == Exec::Serial) {
    for (int img = 0; img < n; ++img)
      for (int ic = 0; ic < c; ++ic) conv3x3_gi_one(gy, w, gx, c, h, wdt, oc, img, ic);
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int img = 0; img < n; ++img)
    for (int ic = 0; ic < c; ++ic) conv3x3_gi_one(gy, w, gx, c, h, wdt, oc, img, ic);
}

static void conv3x3_gw_one(const float* x, const float* gy, float* gw, float* gbias,
                           int n, int c, int h, int wdt, int oc, int ochan) {
  float* gwoc = gw + static_cast<int64_t>(ochan) * c * 9;
  std::memset(gwoc, 0, sizeof(float) * static_cast<size_t>(c) * 9);
  float gb = 0.f;
  for (int img = 0; img < n; ++img) {
    const float* gyc = gy + (static_cast<int64_t>(img) * oc + ochan) * h * wdt;
    for (int i = 0; i < h * wdt; ++i) gb += gyc[i];
    for (int ic = 0; ic < c; ++ic) {
      const float* xc = x + (static_cast<int64_t>(img) * c + ic) * h * wdt;
      float* gwk = gwoc + static_cast<int64_t>(ic) * 9;
      for (int kh = 0; kh < 3; ++kh) {
        for (int kw = 0; kw < 3; ++kw) {
          float acc = 0.f;
          for (int oh = 0; oh < h; ++oh) {
            int ih = oh + kh - 1;
            if (ih < 0 || ih >= h) continue;
            const float* gyrow = gyc + static_cast<int64_t>(oh) * wdt;
            const float* xrow = xc + static_cast<int64_t>(ih) * wdt;
            int off = kw - 1;
            int lo = off < 0 ? 1 : 0;
            int hi = off > 0 ? wdt - 1 : wdt;
            for (int ow = lo; ow < hi; ++ow) acc += gyrow[ow] * xrow[ow + off];
          }
          gwk[kh * 3 + kw] += acc;
        }
      }
    }
  }
  if (gbias) gbias[ochan] = gb;
}

void conv3x3_grad_weight(const float* x, const float* gy, float* gw, float* gbias,
                         int n, int c, int h, int wdt, int oc, Exec exec) {
  if (exec == Exec::Serial) {
    for (int ochan = 0; ochan < oc; ++ochan) conv3x3_gw_one(x, gy, gw, gbias, n, c, h, wdt, oc, ochan);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int ochan = 0; ochan < oc; ++ochan) conv3x3_gw_one(x, gy, gw, gbias, n, c, h, wdt, oc, ochan);
}

// -------------------------------------------------------------- conv 1x1 --

void conv1x1(const float* x, const float* w, const float* bias, float* y,
             int n, int c, int hw, int oc, Exec exec) {
  auto one = [&](int img, int ochan) {
    const float* xin = x + static_cast<int64_t>(img) * c * hw;
    float* yout = y + (static_cast<int64_t>(img) * oc + ochan) * hw;
    float bv = bias ? bias[ochan] : 0.f;
    for (int i = 0; i < hw; ++i) yout[i] = bv;
    const float* wrow = w + static_cast<int64_t>(ochan) * c;
    for (int ic = 0; ic < c; ++ic) {
      float wv = wrow[ic];
      const float* xc = xin + static_cast<int64_t>(ic) * hw;
      for (int i = 0; i < hw; ++i) yout[i] += wv * xc[i];
    }
  };
  if (exec == Exec::Serial) {
    for (int img = 0; img < n; ++img)
      for (int ochan = 0; ochan < oc; ++ochan) one(img, ochan);
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int img = 0; img < n; ++img)
    for (int ochan = 0; ochan < oc; ++ochan) one(img, ochan);
}

void conv1x1_grad_input(const float* gy, const float* w, float* gx,
                        int n, int c, int hw, int oc, Exec exec) {
  auto one = [&](int img, int ic) {
    float* gxc = gx + (static_cast<int64_t>(img) * c + ic) * hw;
    std::memset(gxc, 0, sizeof(float) * static_cast<size_t>(hw));
    for (int ochan = 0; ochan < oc; ++ochan) {
      float wv = w[static_cast<int64_t>(ochan) * c + ic];
      const float* gyc = gy + (static_cast<int64_t>(img) * oc + ochan) * hw;
      for (int i = 0; i < hw; ++i) gxc[i] += wv * gyc[i];
    }
  };
  if (exec == Exec::Serial) {
    for (int img = 0; img < n; ++img)
      for (int ic = 0; ic < c; ++ic) one(img, ic);
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int img = 0; img < n; ++img)
    for (int ic = 0; ic < c; ++ic) one(img, ic);
}

void conv1x1_grad_weight(const float* x, const float* gy, float* gw, float* gbias,
                         int n, int c, int hw, int oc, Exec exec) {
  auto one = [&](int ochan) {
    float* gwrow = gw + static_cast<int64_t>(ochan) * c;
    std::memset(gwrow, 0, sizeof(float) * static_cast<size_t>(c));
    float gb = 0.f;
    for (int img = 0; img < n; ++img) {
      const float* gyc = gy + (static_cast<int64_t>(img) * oc + ochan) * hw;
      for (int i = 0; i < hw; ++i) gb += gyc[i];
      const float* xin = x + static_cast<int64_t>(img) * c * hw;
      for (int ic = 0; ic < c; ++ic) {
        const float* xc = xin + static_cast<int64_t>(ic) * hw;
        float acc = 0.f;
        for (int i = 0; i < hw; ++i) acc += gyc[i] * xc[i];
        gwrow[ic] += acc;
      }
    }
    if (gbias) gbias[ochan] = gb;
  };
  if (exec == Exec::Serial) {
    for (int ochan = 0; ochan < oc; ++ochan) one(ochan);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int ochan = 0; ochan < oc; ++ochan) one(ochan);
}

// --------------------------------------------------------------- softmax --

static void softmax_row(const float* x, float* y, int cols) {
  float mx = x[0];
  for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  float sum = 0.f;
  for (int j = 0; j < cols; ++j) {
    float e = std::exp(x[j] - mx);
    y[j] = e;
    sum += e;
  }
  float inv = 1.f / sum;
  for (int j = 0; j < cols; ++j) y[j] *= inv;
}

void softmax_rows(const float* x, float* y, int rows, int cols, Exec exec) {
  if (exec == Exec::Serial) {
    for (int i = 0; i < rows; ++i) softmax_row(x + static_cast<int64_t>(i) * cols, y + static_cast<int64_t>(i) * cols, cols);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) softmax_row(x + static_cast<int64_t>(i) * cols, y + static_cast<int64_t>(i) * cols, cols);
}

void softmax_rows_grad(const float* y, const float* gy, float* gx, int rows, int cols, Exec exec) {
  auto row = [&](int i) {
    const float* yr = y + static_cast<int64_t>(i) * cols;
    const float* gr = gy + static_cast<int64_t>(i) * cols;
    float* xr = gx + static_cast<int64_t>(i) * cols;
    float dot = 0.f;
    for (int j = 0; j < cols; ++j) dot += gr[j] * yr[j];
    for (int j = 0; j < cols; ++j) xr[j] = (gr[j] - dot) * yr[j];
  };
  if (exec == Exec::Serial) {
    for (int i = 0; i < rows; ++i) row(i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) row(i);
}

// ------------------------------------------------------------ group norm --

void group_norm(const float* x, const float* gamma, const float* beta, float* y,
                float* mean, float* var, int n, int c, int h, int w, int groups,
                float eps, Exec exec) {
  int cpg = c / groups;
  int64_t gsz = static_cast<int64_t>(cpg) * h * w;
  auto one = [&](int img, int g) {
    const float* xg = x + (static_cast<int64_t>(img) * c + static_cast<int64_t>(g) * cpg) * h * w;
    float m = 0.f;
    for (int64_t i = 0; i < gsz; ++i) m += xg[i];
    m /= static_cast<float>(gsz);
    float v = 0.f;
    for (int64_t i = 0; i < gsz; ++i) {
      float d = xg[i] - m;
      v += d * d;
    }
    v /= static_cast<float>(gsz);
    mean[static_cast<int64_t>(img) * groups + g] = m;
    var[static_cast<int64_t>(img) * groups + g] = v;
    float inv = 1.f / std::sqrt(v + eps);
    for (int cc = 0; cc < cpg; ++cc) {
      int ch = g * cpg + cc;
      const float* xc = x + (static_cast<int64_t>(img) * c + ch) * h * w;
      float* yc = y + (static_cast<int64_t>(img) * c + ch) * h * w;
      float ga = gamma[ch], be = beta[ch];
      for (int i = 0; i < h * w; ++i) yc[i] = (xc[i] - m) * inv * ga + be;
    }
  };
  if (exec == Exec::Serial) {
    for (int img = 0; img < n; ++img)
      for (int g = 0; g < groups; ++g) one(img, g);
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int img = 0; img < n; ++img)
    for (int g = 0; g < groups; ++g) one(img, g);
}

void group_norm_grad(const float* x, const float* gamma, const float* mean, const float* var,
                     const float* gy, float* gx, float* ggamma, float* gbeta,
                     int n, int c, int h, int w, int groups, float eps, Exec exec) {
  int cpg = c / groups;
  int hw = h * w;
  int64_t gsz = static_cast<int64_t>(cpg) * hw;
  // Per (image, group): standard two-pass group-norm backward.
  auto one = [&](int img, int g) {
    float m = mean[static_cast<int64_t>(img) * groups + g];
    float v = var[static_cast<int64_t>(img) * groups + g];
    float inv = 1.f / std::sqrt(v + eps);
    float sum_gyg = 0.f;   // sum of gy*gamma
    float sum_gygx = 0.f;  // sum of gy*gamma*(x-m)
    for (int cc = 0; cc < cpg; ++cc) {
      int ch = g * cpg + cc;
      const float* xc = x + (static_cast<int64_t>(img) * c + ch) * hw;
      const float* gyc = gy + (static_cast<int64_t>(img) * c + ch) * hw;
      float ga = gamma[ch];
      for (int i = 0; i < hw; ++i) {
        float gg = gyc[i] * ga;
        sum_gyg += gg;
        sum_gygx += gg * (xc[i] - m);
      }
    }
    float inv3 = inv * inv * inv;
    for (int cc = 0; cc < cpg; ++cc) {
      int ch = g * cpg + cc;
      const float* xc = x + (static_cast<int64_t>(img) * c + ch) * hw;
      const float* gyc = gy + (static_cast<int64_t>(img) * c + ch) * hw;
      float* gxc = gx + (static_cast<int64_t>(img) * c + ch) * hw;
      float ga = gamma[ch];
      for (int i = 0; i < hw; ++i) {
        float gg = gyc[i] * ga;
        gxc[i] = inv * gg - inv / static_cast<float>(gsz) * sum_gyg -
                 inv3 / static_cast<float>(gsz) * (xc[i] - m) * sum_gygx;
      }
    }
  };
  if (exec == Exec::Serial) {
    for (int img = 0; img < n; ++img)
      for (int g = 0; g < groups; ++g) one(img, g);
  } else {
#pragma omp parallel for collapse(2) schedule(static)
    for (int img = 0; img < n; ++img)
      for (int g = 0; g < groups; ++g) one(img, g);
  }
  // Affine grads owned per channel.
  auto affine = [&](int ch) {
    int g = ch / cpg;
    float gsum = 0.f, bsum = 0.f;
    for (int img = 0; img < n; ++img) {
      float m = mean[static_cast<int64_t>(img) * groups + g];
      float inv = 1.f / std::sqrt(var[static_cast<int64_t>(img) * groups + g] + eps);
      const float* xc = x + (static_cast<int64_t>(img) * c + ch) * hw;
      const float* gyc = gy + (static_cast<int64_t>(img) * c + ch) * hw;
      for (int i = 0; i < hw; ++i) {
        gsum += gyc[i] * (xc[i] - m) * inv;
        bsum += gyc[i];
      }
    }
    ggamma[ch] = gsum;
    gbeta[ch] = bsum;
  };
  if (exec == Exec::Serial) {
    for (int ch = 0; ch < c; ++ch) affine(ch);
  } else {
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) affine(ch);
  }
}

// ---------------------------------------------------------- pool/upsample --

void avgpool2(const float* x, float* y, int n, int c, int h, int w, Exec exec) {
  int oh = h / 2, ow = w / 2;
  auto one = [&](int64_t nc) {
    const float* xc = x + nc * h * w;
    float* yc = y + nc * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        const float* p = xc + static_cast<int64_t>(2 * i) * w + 2 * j;
        yc[static_cast<int64_t>(i) * ow + j] = 0.25f * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  };
  int64_t total = static_cast<int64_t>(n) * c;
  if (exec == Exec::Serial) {
    for (int64_t i = 0; i < total; ++i) one(i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < total; ++i) one(i);
}

void avgpool2_grad(const float* gy, float* gx, int n, int c, int h, int w, Exec exec) {
  int oh = h / 2, ow = w / 2;
  auto one = [&](int64_t nc) {
    const float* gyc = gy + nc * oh * ow;
    float* gxc = gx + nc * h * w;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        float v = 0.25f * gyc[static_cast<int64_t>(i) * ow + j];
        float* p = gxc + static_cast<int64_t>(2 * i) * w + 2 * j;
        p[0] = v;
        p[1] = v;
        p[w] = v;
        p[w + 1] = v;
      }
  };
  int64_t total = static_cast<int64_t>(n) * c;
  if (exec == Exec::Serial) {
    for (int64_t i = 0; i < total; ++i) one(i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < total; ++i) one(i);
}

void upsample2(const float* x, float* y, int n, int c, int h, int w, Exec exec) {
  int oh = h * 2, ow = w * 2;
  auto one = [&](int64_t nc) {
    const float* xc = x + nc * h * w;
    float* yc = y + nc * oh * ow;
    for (int i = 0; i < oh; ++i) {
      const float* xrow = xc + static_cast<int64_t>(i / 2) * w;
      float* yrow = yc + static_cast<int64_t>(i) * ow;
      for (int j = 0; j < ow; ++j) yrow[j] = xrow[j / 2];
    }
  };
  int64_t total = static_cast<int64_t>(n) * c;
  if (exec == Exec::Serial) {
    for (int64_t i = 0; i < total; ++i) one(i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < total; ++i) one(i);
}

void upsample2_grad(const float* gy, float* gx, int n, int c, int h, int w, Exec exec) {
  int ow = w * 2;
  auto one = [&](int64_t nc) {
    const float* gyc = gy + nc * 4 * h * w;
    float* gxc = gx + nc * h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const float* p = gyc + static_cast<int64_t>(2 * i) * ow + 2 * j;
        gxc[static_cast<int64_t>(i) * w + j] = p[0] + p[1] + p[ow] + p[ow + 1];
      }
  };
  int64_t total = static_cast<int64_t>(n) * c;
  if (exec == Exec::Serial) {
    for (int64_t i = 0; i < total; ++i) one(i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < total; ++i) one(i);
}

// --------------------------------------------------------- pairwise dots --

void pairwise_dot(const float* x, float* s, int n, int d, Exec exec) {
  auto row = [&](int i) {
    const float* xi = x + static_cast<int64_t>(i) * d;
    float* srow = s + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* xj = x + static_cast<int64_t>(j) * d;
      float acc = 0.f;
      for (int p = 0; p < d; ++p) acc += xi[p] * xj[p];
      srow[j] = acc;
    }
  };
  if (exec == Exec::Serial) {
    for (int i = 0; i < n; ++i) row(i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) row(i);
}

}  // namespace pedsyn::kern
