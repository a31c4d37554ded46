#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "refinelab/nn/gemm.hpp"
#include "refinelab/rng.hpp"

namespace refinelab::nn {

// Elementwise and normalization primitives with explicit backward passes.
// Buffers are raw row-major arrays; R = number of rows, C = feature width.

template <typename Real>
void linear_forward(const Real* x, const Real* w, const Real* b, Real* y, int rows, int in,
                    int out) {
    gemm(false, false, rows, out, in, Real(1), x, in, w, out, Real(0), y, out);
    if (b)
        for (int r = 0; r < rows; ++r)
            for (int o = 0; o < out; ++o) y[size_t(r) * out + o] += b[o];
}

// accumulates dw/db; writes dx (may be null to skip input gradient)
template <typename Real>
void linear_backward(const Real* x, const Real* w, const Real* dy, Real* dx, Real* dw, Real* db,
                     int rows, int in, int out) {
    if (dx) gemm(false, true, rows, in, out, Real(1), dy, out, w, out, Real(0), dx, in);
    gemm(true, false, in, out, rows, Real(1), x, in, dy, out, Real(1), dw, out);
    if (db)
        for (int r = 0; r < rows; ++r)
            for (int o = 0; o < out; ++o) db[o] += dy[size_t(r) * out + o];
}

template <typename Real>
void layernorm_forward(const Real* x, const Real* gamma, const Real* beta, Real* y, Real* mean,
                       Real* rstd, int rows, int c) {
    for (int r = 0; r < rows; ++r) {
        const Real* xr = x + size_t(r) * c;
        Real* yr = y + size_t(r) * c;
        Real m = 0;
        for (int i = 0; i < c; ++i) m += xr[i];
        m /= Real(c);
        Real v = 0;
        for (int i = 0; i < c; ++i) v += (xr[i] - m) * (xr[i] - m);
        v /= Real(c);
        Real rs = Real(1) / std::sqrt(v + Real(1e-5));
        mean[r] = m;
        rstd[r] = rs;
        for (int i = 0; i < c; ++i) yr[i] = (xr[i] - m) * rs * gamma[i] + beta[i];
    }
}

template <typename Real>
void layernorm_backward(const Real* x, const Real* gamma, const Real* mean, const Real* rstd,
                        const Real* dy, Real* dx, Real* dgamma, Real* dbeta, int rows, int c) {
    for (int r = 0; r < rows; ++r) {
        const Real* xr = x + size_t(r) * c;
        const Real* dyr = dy + size_t(r) * c;
        Real* dxr = dx + size_t(r) * c;
        const Real m = mean[r], rs = rstd[r];

        Real sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int i = 0; i < c; ++i) {
            const Real xhat = (xr[i] - m) * rs;
            const Real dxhat = dyr[i] * gamma[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dgamma[i] += dyr[i] * xhat;
            dbeta[i] += dyr[i];
        }
        const Real inv_c = Real(1) / Real(c);
        for (int i = 0; i < c; ++i) {
            const Real xhat = (xr[i] - m) * rs;
            const Real dxhat = dyr[i] * gamma[i];
            dxr[i] = rs * (dxhat - inv_c * sum_dxhat - xhat * inv_c * sum_dxhat_xhat);
        }
    }
}

// Rational tanh approximation (float-level accuracy). Arithmetic only, so
// the compiler can vectorize the activation loops and every element gives
// the same bits whether computed scalar or in a SIMD lane.
template <typename Real>
inline Real fast_tanh(Real x) {
    const Real bound = Real(7.90531110763549805);
    x = std::min(bound, std::max(-bound, x));
    const Real x2 = x * x;
    Real p = Real(-2.76076847742355e-16);
    p = p * x2 + Real(2.00018790482477e-13);
    p = p * x2 + Real(-8.60467152213735e-11);
    p = p * x2 + Real(5.12229709037114e-08);
    p = p * x2 + Real(1.48572235717979e-05);
    p = p * x2 + Real(6.37261928875436e-04);
    p = p * x2 + Real(4.89352455891786e-03);
    p = p * x;
    Real q = Real(1.19825839466702e-06);
    q = q * x2 + Real(1.18534705686654e-04);
    q = q * x2 + Real(2.26843463243900e-03);
    q = q * x2 + Real(4.89352518554385e-03);
    return p / q;
}

template <typename Real>
Real gelu_scalar(Real x) {
    const Real c = Real(0.7978845608028654);  // sqrt(2/pi)
    const Real u = c * (x + Real(0.044715) * x * x * x);
    return Real(0.5) * x * (Real(1) + fast_tanh(u));
}

template <typename Real>
Real gelu_grad_scalar(Real x) {
    const Real c = Real(0.7978845608028654);
    const Real u = c * (x + Real(0.044715) * x * x * x);
    const Real th = fast_tanh(u);
    const Real du = c * (Real(1) + Real(3) * Real(0.044715) * x * x);
    return Real(0.5) * (Real(1) + th) + Real(0.5) * x * (Real(1) - th * th) * du;
}

template <typename Real>
void gelu_forward(const Real* x, Real* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

template <typename Real>
void gelu_backward(const Real* x, const Real* dy, Real* dx, size_t n) {
    for (size_t i = 0; i < n; ++i) dx[i] = dy[i] * gelu_grad_scalar(x[i]);
}

template <typename Real>
Real silu_scalar(Real x) {
    return x / (Real(1) + std::exp(-x));
}

template <typename Real>
Real silu_grad_scalar(Real x) {
    const Real s = Real(1) / (Real(1) + std::exp(-x));
    return s * (Real(1) + x * (Real(1) - s));
}

template <typename Real>
Real sigmoid_scalar(Real x) {
    if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

// row-wise softmax with max subtraction; probs may not alias logits
template <typename Real>
void softmax_rows(const Real* logits, Real* probs, int rows, int c) {
    for (int r = 0; r < rows; ++r) {
        const Real* lr = logits + size_t(r) * c;
        Real* pr = probs + size_t(r) * c;
        Real mx = lr[0];
        for (int i = 1; i < c; ++i) mx = std::max(mx, lr[i]);
        Real sum = 0;
        for (int i = 0; i < c; ++i) {
            pr[i] = std::exp(lr[i] - mx);
            sum += pr[i];
        }
        for (int i = 0; i < c; ++i) pr[i] /= sum;
    }
}

// dlogits = p .* (dp - sum(dp .* p)) per row, written in place over dp
template <typename Real>
void softmax_backward_rows(const Real* probs, const Real* dprobs, Real* dlogits, int rows,
                           int c) {
    for (int r = 0; r < rows; ++r) {
        const Real* pr = probs + size_t(r) * c;
        const Real* dpr = dprobs + size_t(r) * c;
        Real* dlr = dlogits + size_t(r) * c;
        Real dot = 0;
        for (int i = 0; i < c; ++i) dot += dpr[i] * pr[i];
        for (int i = 0; i < c; ++i) dlr[i] = pr[i] * (dpr[i] - dot);
    }
}

// Inverted dropout; mask entries are 0 or 1/(1-p).
template <typename Real>
void dropout_forward(Real* x, Real* mask, size_t n, double p, Rng& rng) {
    const Real scale = Real(1.0 / (1.0 - p));
    for (size_t i = 0; i < n; ++i) {
        mask[i] = rng.uniform01() < p ? Real(0) : scale;
        x[i] *= mask[i];
    }
}

template <typename Real>
void dropout_backward(const Real* mask, Real* dx, size_t n) {
    for (size_t i = 0; i < n; ++i) dx[i] *= mask[i];
}

// Rotary position embedding over pairs (2j, 2j+1) of each head slice.
// cos/sin tables are [seq_len, head_dim/2].
template <typename Real>
void rope_forward(Real* q, int batch, int seq, int dim, int n_heads, const Real* cos_tab,
                  const Real* sin_tab) {
    const int hd = dim / n_heads;
    const int half = hd / 2;
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < seq; ++i) {
            Real* row = q + (size_t(b) * seq + i) * dim;
            const Real* cs = cos_tab + size_t(i) * half;
            const Real* sn = sin_tab + size_t(i) * half;
            for (int h = 0; h < n_heads; ++h) {
                Real* hr = row + h * hd;
                for (int j = 0; j < half; ++j) {
                    const Real a = hr[2 * j], b2 = hr[2 * j + 1];
                    hr[2 * j] = a * cs[j] - b2 * sn[j];
                    hr[2 * j + 1] = a * sn[j] + b2 * cs[j];
                }
            }
        }
}

// gradient of a rotation is the inverse rotation
template <typename Real>
void rope_backward(Real* dq, int batch, int seq, int dim, int n_heads, const Real* cos_tab,
                   const Real* sin_tab) {
    const int hd = dim / n_heads;
    const int half = hd / 2;
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < seq; ++i) {
            Real* row = dq + (size_t(b) * seq + i) * dim;
            const Real* cs = cos_tab + size_t(i) * half;
            const Real* sn = sin_tab + size_t(i) * half;
            for (int h = 0; h < n_heads; ++h) {
                Real* hr = row + h * hd;
                for (int j = 0; j < half; ++j) {
                    const Real a = hr[2 * j], b2 = hr[2 * j + 1];
                    hr[2 * j] = a * cs[j] + b2 * sn[j];
                    hr[2 * j + 1] = -a * sn[j] + b2 * cs[j];
                }
            }
        }
}

}  // namespace refinelab::nn
