#pragma once

#include <cstdint>

namespace pedsyn::kern {

// Every kernel has a serial reference implementation and an OpenMP variant.
// The parallel variants partition work by output element only — each output
// is accumulated by exactly one thread in the same order as the serial code,
// so results are bit-identical for any thread count. Tests compare the two
// paths exactly; the bench target compares their throughput.
enum class Exec { Serial, Parallel };

// Process-wide default used by the ops layer.
Exec default_exec();
void set_default_exec(Exec e);

// C (M,N) = A (M,K) * B (K,N)
void matmul(const float* a, const float* b, float* c, int m, int k, int n, Exec exec);
// C (M,N) = A (M,K) * B^T, B given as (N,K)
void matmul_bt(const float* a, const float* bt, float* c, int m, int k, int n, Exec exec);
// C (K,N) += A^T * G where A (M,K), G (M,N)   (weight-gradient shape)
void matmul_at(const float* a, const float* g, float* c, int m, int k, int n, Exec exec);

// 3x3 conv, stride 1, pad 1. x (N,C,H,W), w (OC,C,3,3), bias (OC) or null.
void conv3x3(const float* x, const float* w, const float* bias, float* y,
             int n, int c, int h, int wdt, int oc, Exec exec);
// Gradients of the same conv. gx may be null when the input grad is not needed.
void conv3x3_grad_input(const float* gy, const float* w, float* gx,
                        int n, int c, int h, int wdt, int oc, Exec exec);
void conv3x3_grad_weight(const float* x, const float* gy, float* gw, float* gbias,
                         int n, int c, int h, int wdt, int oc, Exec exec);

// 1x1 conv (pointwise). w (OC,C).
void conv1x1(const float* x, const float* w, const float* bias, float* y,
             int n, int c, int hw, int oc, Exec exec);
void conv1x1_grad_input(const float* gy, const float* w, float* gx,
                        int n, int c, int hw, int oc, Exec exec);
void conv1x1_grad_weight(const float* x, const float* gy, float* gw, float* gbias,
                         int n, int c, int hw, int oc, Exec exec);

// Row-wise softmax over a (rows, cols) matrix.
void softmax_rows(const float* x, float* y, int rows, int cols, Exec exec);
// gx = (gy - sum(gy*y)) * y per row.
void softmax_rows_grad(const float* y, const float* gy, float* gx, int rows, int cols, Exec exec);

// Group norm over (N,C,H,W) with per-channel affine. mean/var buffers hold
// N*groups entries and are reused by the backward pass.
void group_norm(const float* x, const float* gamma, const float* beta, float* y,
                float* mean, float* var, int n, int c, int h, int w, int groups,
                float eps, Exec exec);
void group_norm_grad(const float* x, const float* gamma, const float* mean, const float* var,
                     const float* gy, float* gx, float* ggamma, float* gbeta,
                     int n, int c, int h, int w, int groups, float eps, Exec exec);

// 2x2 average pool / nearest-neighbour 2x upsample on (N,C,H,W).
void avgpool2(const float* x, float* y, int n, int c, int h, int w, Exec exec);
void avgpool2_grad(const float* gy, float* gx, int n, int c, int h, int w, Exec exec);
void upsample2(const float* x, float* y, int n, int c, int h, int w, Exec exec);
void upsample2_grad(const float* gy, float* gx, int n, int c, int h, int w, Exec exec);

// All-pairs cosine similarity of L2-normalized rows: S (N,N) from X (N,D).
void pairwise_dot(const float* x, float* s, int n, int d, Exec exec);

}  // namespace pedsyn::kern
