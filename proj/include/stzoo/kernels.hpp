#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "stzoo/common.hpp"

// Low-level numeric kernels shared by the layer classes. Everything is
// templated on the scalar type so tests can run the exact same code in double
// precision (finite-difference checks). Layouts are row-major throughout:
//   2d activations  [N, C, H, W]        (N folds batch*time on the 2d path)
//   3d activations  [B, C, T, H, W]
//   conv2d weights  [Co, Ci, kh, kw]
//   conv3d weights  [Co, Ci, kt, kh, kw]

namespace stzoo::kern {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<MatRM<T>>;
template <typename T>
using CMap = Eigen::Map<const MatRM<T>>;

inline int64_t conv_out(int64_t in, int64_t k, int64_t s, int64_t p) {
  return (in + 2 * p - k) / s + 1;
}

// Pool output size, torch semantics: with ceil_mode the last window must
// still start inside the input (not entirely in padding).
inline int64_t pool_out(int64_t in, int64_t k, int64_t s, int64_t p, bool ceil_mode) {
  int64_t num = in + 2 * p - k;
  int64_t out = (ceil_mode ? (num + s - 1) / s : num / s) + 1;
  if (ceil_mode && (out - 1) * s >= in + p) --out;
  return out;
}

// ---------------------------------------------------------------------------
// GEMM wrappers (C[m,n] = A[m,k] * B[k,n], optionally accumulating).
// ---------------------------------------------------------------------------

template <typename T>
void gemm(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  CMap<T> A(a, m, k);
  CMap<T> B(b, k, n);
  Map<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

// C[m,n] (+)= A^T[m,k] * B[k,n] where A is stored [k,m]
template <typename T>
void gemm_ta(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  CMap<T> A(a, k, m);
  CMap<T> B(b, k, n);
  Map<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

// C[m,n] (+)= A[m,k] * B^T[k,n] where B is stored [n,k]
template <typename T>
void gemm_tb(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  CMap<T> A(a, m, k);
  CMap<T> B(b, n, k);
  Map<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

// ---------------------------------------------------------------------------
// conv2d via im2col
// ---------------------------------------------------------------------------

template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t k, int64_t s, int64_t p, T* col) {
  int64_t ho = conv_out(H, k, s, p);
  int64_t wo = conv_out(W, k, s, p);
  int64_t cols = ho * wo;
  int64_t row = 0;
  for (int64_t c = 0; c < C; ++c) {
    const T* plane = x + c * H * W;
    for (int64_t kh = 0; kh < k; ++kh) {
      for (int64_t kw = 0; kw < k; ++kw, ++row) {
        T* dst = col + row * cols;
        for (int64_t oh = 0; oh < ho; ++oh) {
          int64_t ih = oh * s + kh - p;
          if (ih < 0 || ih >= H) {
            std::fill(dst + oh * wo, dst + (oh + 1) * wo, T(0));
            continue;
          }
          const T* src = plane + ih * W;
          for (int64_t ow = 0; ow < wo; ++ow) {
            int64_t iw = ow * s + kw - p;
            dst[oh * wo + ow] = (iw < 0 || iw >= W) ? T(0) : src[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int64_t C, int64_t H, int64_t W, int64_t k, int64_t s, int64_t p, T* x) {
  int64_t ho = conv_out(H, k, s, p);
  int64_t wo = conv_out(W, k, s, p);
  int64_t cols = ho * wo;
  int64_t row = 0;
  for (int64_t c = 0; c < C; ++c) {
    T* plane = x + c * H * W;
    for (int64_t kh = 0; kh < k; ++kh) {
      for (int64_t kw = 0; kw < k; ++kw, ++row) {
        const T* src = col + row * cols;
        for (int64_t oh = 0; oh < ho; ++oh) {
          int64_t ih = oh * s + kh - p;
          if (ih < 0 || ih >= H) continue;
          T* dst = plane + ih * W;
          for (int64_t ow = 0; ow < wo; ++ow) {
            int64_t iw = ow * s + kw - p;
            if (iw >= 0 && iw < W) dst[iw] += src[oh * wo + ow];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y, int64_t N, int64_t Ci, int64_t H,
                    int64_t W, int64_t Co, int64_t k, int64_t s, int64_t p,
                    std::vector<T>& workspace) {
  int64_t ho = conv_out(H, k, s, p);
  int64_t wo = conv_out(W, k, s, p);
  int64_t rows = Ci * k * k;
  int64_t cols = ho * wo;
  workspace.resize(static_cast<size_t>(rows * cols));
  for (int64_t n = 0; n < N; ++n) {
    im2col(x + n * Ci * H * W, Ci, H, W, k, s, p, workspace.data());
    T* yn = y + n * Co * cols;
    gemm(w, workspace.data(), yn, Co, rows, cols, false);
    if (bias) {
      for (int64_t c = 0; c < Co; ++c) {
        T* row0 = yn + c * cols;
        for (int64_t i = 0; i < cols; ++i) row0[i] += bias[c];
      }
    }
  }
}

// gw/gb accumulate; gx is overwritten. Any of gx/gw/gb may be null.
template <typename T>
void conv2d_backward(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb, int64_t N,
                     int64_t Ci, int64_t H, int64_t W, int64_t Co, int64_t k, int64_t s, int64_t p,
                     std::vector<T>& workspace) {
  int64_t ho = conv_out(H, k, s, p);
  int64_t wo = conv_out(W, k, s, p);
  int64_t rows = Ci * k * k;
  int64_t cols = ho * wo;
  workspace.resize(static_cast<size_t>(rows * cols));
  if (gx) std::fill(gx, gx + N * Ci * H * W, T(0));
  for (int64_t n = 0; n < N; ++n) {
    const T* gyn = gy + n * Co * cols;
    if (gw) {
      im2col(x + n * Ci * H * W, Ci, H, W, k, s, p, workspace.data());
      gemm_tb(gyn, workspace.data(), gw, Co, cols, rows, true);
    }
    if (gb) {
      for (int64_t c = 0; c < Co; ++c) {
        T acc = T(0);
        const T* row0 = gyn + c * cols;
        for (int64_t i = 0; i < cols; ++i) acc += row0[i];
        gb[c] += acc;
      }
    }
    if (gx) {
      gemm_ta(w, gyn, workspace.data(), rows, Co, cols, false);
      col2im(workspace.data(), Ci, H, W, k, s, p, gx + n * Ci * H * W);
    }
  }
}

// ---------------------------------------------------------------------------
// conv3d via vol2col. Temporal stride is always 1, temporal pad = kt/2.
// ---------------------------------------------------------------------------

template <typename T>
void vol2col(const T* x, int64_t C, int64_t Tt, int64_t H, int64_t W, int64_t kt, int64_t k,
             int64_t s, int64_t p, T* col) {
  int64_t pt = kt / 2;
  int64_t to = Tt;  // stride 1, same padding in time
  int64_t ho = conv_out(H, k, s, p);
  int64_t wo = conv_out(W, k, s, p);
  int64_t cols = to * ho * wo;
  int64_t row = 0;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t jt = 0; jt < kt; ++jt) {
      for (int64_t kh = 0; kh < k; ++kh) {
        for (int64_t kw = 0; kw < k; ++kw, ++row) {
          T* dst = col + row * cols;
          for (int64_t ot = 0; ot < to; ++ot) {
            int64_t it = ot + jt - pt;
            for (int64_t oh = 0; oh < ho; ++oh) {
              int64_t ih = oh * s + kh - p;
              T* d = dst + (ot * ho + oh) * wo;
              if (it < 0 || it >= Tt || ih < 0 || ih >= H) {
                std::fill(d, d + wo, T(0));
                continue;
              }
              const T* srcrow = x + ((c * Tt + it) * H + ih) * W;
              for (int64_t ow = 0; ow < wo; ++ow) {
                int64_t iw = ow * s + kw - p;
                d[ow] = (iw < 0 || iw >= W) ? T(0) : srcrow[iw];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2vol(const T* col, int64_t C, int64_t Tt, int64_t H, int64_t W, int64_t kt, int64_t k,
             int64_t s, int64_t p, T* x) {
  int64_t pt = kt / 2;
  int64_t to = Tt;
  int64_t ho = conv_out(H, k, s, p);
  int64_t wo = conv_out(W, k, s, p);
  int64_t cols = to * ho * wo;
  int64_t row = 0;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t jt = 0; jt < kt; ++jt) {
      for (int64_t kh = 0; kh < k; ++kh) {
        for (int64_t kw = 0; kw < k; ++kw, ++row) {
          const T* src = col + row * cols;
          for (int64_t ot = 0; ot < to; ++ot) {
            int64_t it = ot + jt - pt;
            if (it < 0 || it >= Tt) continue;
            for (int64_t oh = 0; oh < ho; ++oh) {
              int64_t ih = oh * s + kh - p;
              if (ih < 0 || ih >= H) continue;
              T* dstrow = x + ((c * Tt + it) * H + ih) * W;
              const T* s0 = src + (ot * ho + oh) * wo;
              for (int64_t ow = 0; ow < wo; ++ow) {
                int64_t iw = ow * s + kw - p;
                if (iw >= 0 && iw < W) dstrow[iw] += s0[ow];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_forward(const T* x, const T* w, const T* bias, T* y, int64_t B, int64_t Ci, int64_t Tt,
                    int64_t H, int64_t W, int64_t Co, int64_t kt, int64_t k, int64_t s, int64_t p,
                    std::vector<T>& workspace) {
  int64_t ho = conv_out(H, k, s, p);
  int64_t wo = conv_out(W, k, s, p);
  int64_t rows = Ci * kt * k * k;
  int64_t cols = Tt * ho * wo;
  workspace.resize(static_cast<size_t>(rows * cols));
  for (int64_t b = 0; b < B; ++b) {
    vol2col(x + b * Ci * Tt * H * W, Ci, Tt, H, W, kt, k, s, p, workspace.data());
    T* yb = y + b * Co * cols;
    gemm(w, workspace.data(), yb, Co, rows, cols, false);
    if (bias) {
      for (int64_t c = 0; c < Co; ++c) {
        T* row0 = yb + c * cols;
        for (int64_t i = 0; i < cols; ++i) row0[i] += bias[c];
      }
    }
  }
}

template <typename T>
void conv3d_backward(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb, int64_t B,
                     int64_t Ci, int64_t Tt, int64_t H, int64_t W, int64_t Co, int64_t kt,
                     int64_t k, int64_t s, int64_t p, std::vector<T>& workspace) {
  int64_t ho = conv_out(H, k, s, p);
  int64_t wo = conv_out(W, k, s, p);
  int64_t rows = Ci * kt * k * k;
  int64_t cols = Tt * ho * wo;
  workspace.resize(static_cast<size_t>(rows * cols));
  if (gx) std::fill(gx, gx + B * Ci * Tt * H * W, T(0));
  for (int64_t b = 0; b < B; ++b) {
    const T* gyb = gy + b * Co * cols;
    if (gw) {
      vol2col(x + b * Ci * Tt * H * W, Ci, Tt, H, W, kt, k, s, p, workspace.data());
      gemm_tb(gyb, workspace.data(), gw, Co, cols, rows, true);
    }
    if (gb) {
      for (int64_t c = 0; c < Co; ++c) {
        T acc = T(0);
        const T* row0 = gyb + c * cols;
        for (int64_t i = 0; i < cols; ++i) acc += row0[i];
        gb[c] += acc;
      }
    }
    if (gx) {
      gemm_ta(w, gyb, workspace.data(), rows, Co, cols, false);
      col2vol(workspace.data(), Ci, Tt, H, W, kt, k, s, p, gx + b * Ci * Tt * H * W);
    }
  }
}

// ---------------------------------------------------------------------------
// Spatial max pooling on [planes, H, W], square window, -inf padding.
// argmax stores the flat (h*W+w) winner per output element.
// ---------------------------------------------------------------------------

template <typename T>
void maxpool2d_forward(const T* x, T* y, int64_t* argmax, int64_t planes, int64_t H, int64_t W,
                       int64_t k, int64_t s, int64_t p, bool ceil_mode) {
  int64_t ho = pool_out(H, k, s, p, ceil_mode);
  int64_t wo = pool_out(W, k, s, p, ceil_mode);
  for (int64_t n = 0; n < planes; ++n) {
    const T* in = x + n * H * W;
    T* out = y + n * ho * wo;
    int64_t* am = argmax ? argmax + n * ho * wo : nullptr;
    for (int64_t oh = 0; oh < ho; ++oh) {
      int64_t h0 = std::max<int64_t>(oh * s - p, 0);
      int64_t h1 = std::min<int64_t>(oh * s - p + k, H);
      for (int64_t ow = 0; ow < wo; ++ow) {
        int64_t w0 = std::max<int64_t>(ow * s - p, 0);
        int64_t w1 = std::min<int64_t>(ow * s - p + k, W);
        T best = -std::numeric_limits<T>::infinity();
        int64_t bi = h0 * W + w0;
        for (int64_t ih = h0; ih < h1; ++ih)
          for (int64_t iw = w0; iw < w1; ++iw) {
            T v = in[ih * W + iw];
            if (v > best) {
              best = v;
              bi = ih * W + iw;
            }
          }
        out[oh * wo + ow] = best;
        if (am) am[oh * wo + ow] = bi;
      }
    }
  }
}

template <typename T>
void maxpool2d_backward(const T* gy, const int64_t* argmax, T* gx, int64_t planes, int64_t HW,
                        int64_t out_hw) {
  std::fill(gx, gx + planes * HW, T(0));
  for (int64_t n = 0; n < planes; ++n) {
    const T* g = gy + n * out_hw;
    const int64_t* am = argmax + n * out_hw;
    T* dst = gx + n * HW;
    for (int64_t i = 0; i < out_hw; ++i) dst[am[i]] += g[i];
  }
}

// ---------------------------------------------------------------------------
// Temporal max pooling. Series layout [outer, T, inner]: the 2d path views
// [B, T, C*H*W]; the 3d path views it per (b,c) plane as [B*C, T, H*W].
// argmax stores the winning t per output element.
// ---------------------------------------------------------------------------

template <typename T>
void temporal_maxpool_forward(const T* x, T* y, int64_t* argmax, int64_t outer, int64_t Tin,
                              int64_t inner, int64_t k, int64_t s, int64_t p) {
  int64_t to = pool_out(Tin, k, s, p, false);
  for (int64_t o = 0; o < outer; ++o) {
    const T* in = x + o * Tin * inner;
    T* out = y + o * to * inner;
    int64_t* am = argmax + o * to * inner;
    for (int64_t ot = 0; ot < to; ++ot) {
      int64_t t0 = std::max<int64_t>(ot * s - p, 0);
      int64_t t1 = std::min<int64_t>(ot * s - p + k, Tin);
      for (int64_t i = 0; i < inner; ++i) {
        T best = in[t0 * inner + i];
        int64_t bt = t0;
        for (int64_t t = t0 + 1; t < t1; ++t) {
          T v = in[t * inner + i];
          if (v > best) {
            best = v;
            bt = t;
          }
        }
        out[ot * inner + i] = best;
        am[ot * inner + i] = bt;
      }
    }
  }
}

template <typename T>
void temporal_maxpool_backward(const T* gy, const int64_t* argmax, T* gx, int64_t outer,
                               int64_t Tin, int64_t inner, int64_t to) {
  std::fill(gx, gx + outer * Tin * inner, T(0));
  for (int64_t o = 0; o < outer; ++o) {
    const T* g = gy + o * to * inner;
    const int64_t* am = argmax + o * to * inner;
    T* dst = gx + o * Tin * inner;
    for (int64_t j = 0; j < to * inner; ++j) {
      int64_t i = j % inner;
      dst[am[j] * inner + i] += g[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Batch normalization over a [N, C, I] view (channel axis 1).
// ---------------------------------------------------------------------------

template <typename T>
void bn_forward(const T* x, T* y, const T* gamma, const T* beta, T* running_mean, T* running_var,
                T* save_mean, T* save_invstd, int64_t N, int64_t C, int64_t I, T momentum, T eps,
                bool training) {
  int64_t count = N * I;
  for (int64_t c = 0; c < C; ++c) {
    T mean, invstd;
    if (training) {
      T sum = T(0), sq = T(0);
      for (int64_t n = 0; n < N; ++n) {
        const T* p = x + (n * C + c) * I;
        for (int64_t i = 0; i < I; ++i) {
          sum += p[i];
          sq += p[i] * p[i];
        }
      }
      mean = sum / T(count);
      T var = sq / T(count) - mean * mean;
      if (var < T(0)) var = T(0);
      invstd = T(1) / std::sqrt(var + eps);
      // running var uses the unbiased estimate, matching the usual convention
      T unbiased = count > 1 ? var * T(count) / T(count - 1) : var;
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mean;
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
      save_mean[c] = mean;
      save_invstd[c] = invstd;
    } else {
      mean = running_mean[c];
      invstd = T(1) / std::sqrt(running_var[c] + eps);
    }
    T g = gamma[c] * invstd;
    T b = beta[c] - mean * g;
    for (int64_t n = 0; n < N; ++n) {
      const T* p = x + (n * C + c) * I;
      T* q = y + (n * C + c) * I;
      for (int64_t i = 0; i < I; ++i) q[i] = p[i] * g + b;
    }
  }
}

// Training-mode backward (batch statistics). ggamma/gbeta accumulate.
template <typename T>
void bn_backward(const T* x, const T* gy, const T* gamma, const T* save_mean, const T* save_invstd,
                 T* gx, T* ggamma, T* gbeta, int64_t N, int64_t C, int64_t I) {
  int64_t count = N * I;
  for (int64_t c = 0; c < C; ++c) {
    T mean = save_mean[c], invstd = save_invstd[c];
    T sum_gy = T(0), sum_gy_xhat = T(0);
    for (int64_t n = 0; n < N; ++n) {
      const T* px = x + (n * C + c) * I;
      const T* pg = gy + (n * C + c) * I;
      for (int64_t i = 0; i < I; ++i) {
        T xhat = (px[i] - mean) * invstd;
        sum_gy += pg[i];
        sum_gy_xhat += pg[i] * xhat;
      }
    }
    if (gbeta) gbeta[c] += sum_gy;
    if (ggamma) ggamma[c] += sum_gy_xhat;
    if (gx) {
      T scale = gamma[c] * invstd / T(count);
      for (int64_t n = 0; n < N; ++n) {
        const T* px = x + (n * C + c) * I;
        const T* pg = gy + (n * C + c) * I;
        T* pd = gx + (n * C + c) * I;
        for (int64_t i = 0; i < I; ++i) {
          T xhat = (px[i] - mean) * invstd;
          pd[i] = scale * (T(count) * pg[i] - sum_gy - xhat * sum_gy_xhat);
        }
      }
    }
  }
}

template <typename T>
void relu_forward(T* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    if (x[i] < T(0)) x[i] = T(0);
}

// Uses the cached output as the mask (y > 0).
template <typename T>
void relu_backward(const T* y, T* g, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    if (y[i] <= T(0)) g[i] = T(0);
}

// ---------------------------------------------------------------------------
// Temporal aggregation modules. 2d-path layout [B, T, C, HW] flattened from
// [B*T, C, H, W].
// ---------------------------------------------------------------------------

// Depthwise 3-tap temporal convolution, zero padding in time. w is [C, 3].
template <typename T>
void tam_forward(const T* x, const T* w, T* y, int64_t B, int64_t Tt, int64_t C, int64_t HW) {
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t t = 0; t < Tt; ++t) {
      for (int64_t c = 0; c < C; ++c) {
        const T* wc = w + c * 3;
        T* out = y + ((b * Tt + t) * C + c) * HW;
        std::fill(out, out + HW, T(0));
        for (int64_t j = 0; j < 3; ++j) {
          int64_t ts = t + j - 1;
          if (ts < 0 || ts >= Tt) continue;
          const T* in = x + ((b * Tt + ts) * C + c) * HW;
          T wj = wc[j];
          for (int64_t i = 0; i < HW; ++i) out[i] += wj * in[i];
        }
      }
    }
  }
}

template <typename T>
void tam_backward(const T* x, const T* w, const T* gy, T* gx, T* gw, int64_t B, int64_t Tt,
                  int64_t C, int64_t HW) {
  if (gx) std::fill(gx, gx + B * Tt * C * HW, T(0));
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t t = 0; t < Tt; ++t) {
      for (int64_t c = 0; c < C; ++c) {
        const T* g = gy + ((b * Tt + t) * C + c) * HW;
        for (int64_t j = 0; j < 3; ++j) {
          int64_t ts = t + j - 1;
          if (ts < 0 || ts >= Tt) continue;
          const T* in = x + ((b * Tt + ts) * C + c) * HW;
          if (gw) {
            T acc = T(0);
            for (int64_t i = 0; i < HW; ++i) acc += g[i] * in[i];
            gw[c * 3 + j] += acc;
          }
          if (gx) {
            T* d = gx + ((b * Tt + ts) * C + c) * HW;
            T wj = w[c * 3 + j];
            for (int64_t i = 0; i < HW; ++i) d[i] += wj * g[i];
          }
        }
      }
    }
  }
}

// Shift the first `shift` channels +1 in time, the next `shift` channels -1,
// zero fill at the boundaries, remaining channels copied.
template <typename T>
void tsm_forward(const T* x, T* y, int64_t B, int64_t Tt, int64_t C, int64_t HW, int64_t shift) {
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t t = 0; t < Tt; ++t) {
      for (int64_t c = 0; c < C; ++c) {
        T* out = y + ((b * Tt + t) * C + c) * HW;
        int64_t ts = t;
        if (c < shift)
          ts = t - 1;  // takes the value from the previous frame
        else if (c < 2 * shift)
          ts = t + 1;
        if (ts < 0 || ts >= Tt) {
          std::fill(out, out + HW, T(0));
        } else {
          const T* in = x + ((b * Tt + ts) * C + c) * HW;
          std::copy(in, in + HW, out);
        }
      }
    }
  }
}

template <typename T>
void tsm_backward(const T* gy, T* gx, int64_t B, int64_t Tt, int64_t C, int64_t HW,
                  int64_t shift) {
  std::fill(gx, gx + B * Tt * C * HW, T(0));
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t t = 0; t < Tt; ++t) {
      for (int64_t c = 0; c < C; ++c) {
        int64_t ts = t;
        if (c < shift)
          ts = t - 1;
        else if (c < 2 * shift)
          ts = t + 1;
        if (ts < 0 || ts >= Tt) continue;
        const T* g = gy + ((b * Tt + t) * C + c) * HW;
        T* d = gx + ((b * Tt + ts) * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) d[i] += g[i];
      }
    }
  }
}

// Full (channel-mixing) 3-tap temporal convolution. w is [C, C, 3] as
// w[co, ci, tap]; per output frame three [C,C] gemms accumulate over taps.
template <typename T>
void tconv1d_forward(const T* x, const T* w, const T* bias, T* y, int64_t B, int64_t Tt, int64_t C,
                     int64_t HW, std::vector<T>& wtap) {
  // repack taps into three contiguous [C, C] matrices
  wtap.resize(static_cast<size_t>(3 * C * C));
  for (int64_t j = 0; j < 3; ++j)
    for (int64_t co = 0; co < C; ++co)
      for (int64_t ci = 0; ci < C; ++ci) wtap[(j * C + co) * C + ci] = w[(co * C + ci) * 3 + j];
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t t = 0; t < Tt; ++t) {
      T* out = y + (b * Tt + t) * C * HW;
      bool first = true;
      for (int64_t j = 0; j < 3; ++j) {
        int64_t ts = t + j - 1;
        if (ts < 0 || ts >= Tt) continue;
        const T* in = x + (b * Tt + ts) * C * HW;
        gemm(wtap.data() + j * C * C, in, out, C, C, HW, !first);
        first = false;
      }
      if (first) std::fill(out, out + C * HW, T(0));
      if (bias) {
        for (int64_t c = 0; c < C; ++c) {
          T* row0 = out + c * HW;
          for (int64_t i = 0; i < HW; ++i) row0[i] += bias[c];
        }
      }
    }
  }
}

template <typename T>
void tconv1d_backward(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb, int64_t B,
                      int64_t Tt, int64_t C, int64_t HW, std::vector<T>& wtap) {
  wtap.resize(static_cast<size_t>(3 * C * C));
  for (int64_t j = 0; j < 3; ++j)
    for (int64_t co = 0; co < C; ++co)
      for (int64_t ci = 0; ci < C; ++ci) wtap[(j * C + co) * C + ci] = w[(co * C + ci) * 3 + j];
  if (gx) std::fill(gx, gx + B * Tt * C * HW, T(0));
  std::vector<T> gwtap;
  if (gw) gwtap.assign(static_cast<size_t>(3 * C * C), T(0));
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t t = 0; t < Tt; ++t) {
      const T* g = gy + (b * Tt + t) * C * HW;
      if (gb) {
        for (int64_t c = 0; c < C; ++c) {
          T acc = T(0);
          const T* row0 = g + c * HW;
          for (int64_t i = 0; i < HW; ++i) acc += row0[i];
          gb[c] += acc;
        }
      }
      for (int64_t j = 0; j < 3; ++j) {
        int64_t ts = t + j - 1;
        if (ts < 0 || ts >= Tt) continue;
        const T* in = x + (b * Tt + ts) * C * HW;
        if (gw) gemm_tb(g, in, gwtap.data() + j * C * C, C, HW, C, true);
        if (gx) gemm_ta(wtap.data() + j * C * C, g, gx + (b * Tt + ts) * C * HW, C, C, HW, true);
      }
    }
  }
  if (gw)
    for (int64_t j = 0; j < 3; ++j)
      for (int64_t co = 0; co < C; ++co)
        for (int64_t ci = 0; ci < C; ++ci) gw[(co * C + ci) * 3 + j] += gwtap[(j * C + co) * C + ci];
}

// Row-wise softmax on [n, k].
template <typename T>
void softmax_rows(const T* x, T* y, int64_t n, int64_t k) {
  for (int64_t i = 0; i < n; ++i) {
    const T* in = x + i * k;
    T* out = y + i * k;
    T m = in[0];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, in[j]);
    T sum = T(0);
    for (int64_t j = 0; j < k; ++j) {
      out[j] = std::exp(in[j] - m);
      sum += out[j];
    }
    for (int64_t j = 0; j < k; ++j) out[j] /= sum;
  }
}

}  // namespace stzoo::kern
