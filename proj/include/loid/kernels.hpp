#pragma once

#include <cmath>
#include <cstddef>

#include "loid/mat.hpp"

// Compute kernels behind the encoder and heads.
//
// kern::      dispatching versions used everywhere: below kParallelCutoff
//             they call straight into the serial reference, above it they
//             run an OpenMP row-parallel loop. Parallelism is only over
//             independent output rows, with the per-element reduction order
//             identical to the serial code, so both paths are bitwise equal
//             at any thread count.
// kern::ref   plain serial reference, kept for tests and the benchmark.

namespace loid::kern {

// output sizes below this run on the serial path
inline constexpr size_t kParallelCutoff = 8192;

namespace ref {

// C = A(MxK) * B(KxN), or += when accumulate
template <class T>
void matmul_nn(Mat<T>& c, const Mat<T>& a, const Mat<T>& b, bool accumulate = false) {
    const size_t m = a.rows, k = a.cols, n = b.cols;
    for (size_t i = 0; i < m; ++i) {
        T* ci = c.row(i);
        if (!accumulate)
            for (size_t j = 0; j < n; ++j) ci[j] = T(0);
        const T* ai = a.row(i);
        for (size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b.row(p);
            for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C = A(MxK) * B(NxK)^T
template <class T>
void matmul_nt(Mat<T>& c, const Mat<T>& a, const Mat<T>& b, bool accumulate = false) {
    const size_t m = a.rows, k = a.cols, n = b.rows;
    for (size_t i = 0; i < m; ++i) {
        const T* ai = a.row(i);
        T* ci = c.row(i);
        for (size_t j = 0; j < n; ++j) {
            const T* bj = b.row(j);
            T acc = T(0);
            for (size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

// C = A(KxM)^T * B(KxN)
template <class T>
void matmul_tn(Mat<T>& c, const Mat<T>& a, const Mat<T>& b, bool accumulate = false) {
    const size_t k = a.rows, m = a.cols, n = b.cols;
    for (size_t i = 0; i < m; ++i) {
        T* ci = c.row(i);
        for (size_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (size_t p = 0; p < k; ++p) acc += a(p, i) * b(p, j);
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

template <class T>
void add_bias_rows(Mat<T>& x, const Mat<T>& bias) {
    for (size_t i = 0; i < x.rows; ++i) {
        T* xi = x.row(i);
        for (size_t j = 0; j < x.cols; ++j) xi[j] += bias.data[j];
    }
}

template <class T>
void axpy(Mat<T>& y, T alpha, const Mat<T>& x) {
    for (size_t i = 0; i < y.size(); ++i) y.data[i] += alpha * x.data[i];
}

template <class T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <class T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
    const T pdf = T(0.39894228040143267794) * std::exp(T(-0.5) * x * x);
    return cdf + x * pdf;
}

template <class T>
void gelu_forward(Mat<T>& out, const Mat<T>& in) {
    for (size_t i = 0; i < in.size(); ++i) out.data[i] = gelu(in.data[i]);
}

template <class T>
void gelu_backward(Mat<T>& din, const Mat<T>& in, const Mat<T>& dout) {
    for (size_t i = 0; i < in.size(); ++i) din.data[i] = dout.data[i] * gelu_grad(in.data[i]);
}

// Row-wise layer norm; caches per-row mean and inverse stddev for backward.
template <class T>
void layernorm_row(const T* xi, T* oi, T& mu_out, T& rs_out, const T* gamma, const T* beta,
                   size_t d, T eps) {
    T mu = T(0);
    for (size_t j = 0; j < d; ++j) mu += xi[j];
    mu /= T(d);
    T var = T(0);
    for (size_t j = 0; j < d; ++j) {
        const T c = xi[j] - mu;
        var += c * c;
    }
    var /= T(d);
    const T rs = T(1) / std::sqrt(var + eps);
    mu_out = mu;
    rs_out = rs;
    for (size_t j = 0; j < d; ++j) oi[j] = (xi[j] - mu) * rs * gamma[j] + beta[j];
}

template <class T>
void layernorm_forward(Mat<T>& out, Mat<T>& mean, Mat<T>& rstd, const Mat<T>& in,
                       const Mat<T>& gamma, const Mat<T>& beta, T eps) {
    for (size_t i = 0; i < in.rows; ++i)
        layernorm_row(in.row(i), out.row(i), mean.data[i], rstd.data[i], gamma.data.data(),
                      beta.data.data(), in.cols, eps);
}

template <class T>
void layernorm_row_backward(const T* xi, const T* doi, T* dxi, T mu, T rs, const T* gamma,
                            size_t d) {
    T sum_dh = T(0), sum_dh_xhat = T(0);
    for (size_t j = 0; j < d; ++j) {
        const T xhat = (xi[j] - mu) * rs;
        const T dh = doi[j] * gamma[j];
        sum_dh += dh;
        sum_dh_xhat += dh * xhat;
    }
    for (size_t j = 0; j < d; ++j) {
        const T xhat = (xi[j] - mu) * rs;
        const T dh = doi[j] * gamma[j];
        dxi[j] = rs * (dh - (sum_dh + xhat * sum_dh_xhat) / T(d));
    }
}

template <class T>
void layernorm_backward(Mat<T>& din, const Mat<T>& in, const Mat<T>& dout, const Mat<T>& mean,
                        const Mat<T>& rstd, const Mat<T>& gamma) {
    for (size_t i = 0; i < in.rows; ++i)
        layernorm_row_backward(in.row(i), dout.row(i), din.row(i), mean.data[i], rstd.data[i],
                               gamma.data.data(), in.cols);
}

// Softmax over the first valid_cols entries of each row; the rest are zeroed.
// Padding positions never enter the max or the normalizing sum, which is what
// makes extending a sequence with [PAD] a no-op for the valid outputs.
template <class T>
void softmax_row_masked(const T* si, T* oi, size_t valid_cols, size_t cols) {
    T mx = si[0];
    for (size_t j = 1; j < valid_cols; ++j) mx = std::max(mx, si[j]);
    T sum = T(0);
    for (size_t j = 0; j < valid_cols; ++j) {
        oi[j] = std::exp(si[j] - mx);
        sum += oi[j];
    }
    const T inv = T(1) / sum;
    for (size_t j = 0; j < valid_cols; ++j) oi[j] *= inv;
    for (size_t j = valid_cols; j < cols; ++j) oi[j] = T(0);
}

template <class T>
void softmax_rows_masked(Mat<T>& out, const Mat<T>& scores, size_t valid_cols) {
    for (size_t i = 0; i < scores.rows; ++i)
        softmax_row_masked(scores.row(i), out.row(i), valid_cols, scores.cols);
}

// dscores = P .* (dprobs - rowsum(dprobs .* P)) restricted to valid columns
template <class T>
void softmax_row_backward(const T* pi, const T* dpi, T* dsi, size_t valid_cols, size_t cols) {
    T dot = T(0);
    for (size_t j = 0; j < valid_cols; ++j) dot += dpi[j] * pi[j];
    for (size_t j = 0; j < valid_cols; ++j) dsi[j] = pi[j] * (dpi[j] - dot);
    for (size_t j = valid_cols; j < cols; ++j) dsi[j] = T(0);
}

template <class T>
void softmax_backward_masked(Mat<T>& dscores, const Mat<T>& probs, const Mat<T>& dprobs,
                             size_t valid_cols) {
    for (size_t i = 0; i < probs.rows; ++i)
        softmax_row_backward(probs.row(i), dprobs.row(i), dscores.row(i), valid_cols,
                             probs.cols);
}

// S = scale * Q_h * K_h^T where the head slice is columns [off, off+dh)
template <class T>
void attn_scores_head(Mat<T>& s, const Mat<T>& q, const Mat<T>& k, size_t off, size_t dh,
                      T scale) {
    const size_t n = q.rows;
    for (size_t i = 0; i < n; ++i) {
        const T* qi = q.row(i) + off;
        T* si = s.row(i);
        for (size_t j = 0; j < n; ++j) {
            const T* kj = k.row(j) + off;
            T acc = T(0);
            for (size_t t = 0; t < dh; ++t) acc += qi[t] * kj[t];
            si[j] = acc * scale;
        }
    }
}

// accumulates dq, dk for one head given dS
template <class T>
void attn_scores_head_backward(Mat<T>& dq, Mat<T>& dk, const Mat<T>& ds, const Mat<T>& q,
                               const Mat<T>& k, size_t off, size_t dh, T scale) {
    const size_t n = q.rows;
    for (size_t i = 0; i < n; ++i) {
        const T* dsi = ds.row(i);
        T* dqi = dq.row(i) + off;
        for (size_t j = 0; j < n; ++j) {
            const T g = dsi[j] * scale;
            const T* kj = k.row(j) + off;
            for (size_t t = 0; t < dh; ++t) dqi[t] += g * kj[t];
        }
    }
    for (size_t j = 0; j < n; ++j) {
        T* dkj = dk.row(j) + off;
        for (size_t i = 0; i < n; ++i) {
            const T g = ds(i, j) * scale;
            const T* qi = q.row(i) + off;
            for (size_t t = 0; t < dh; ++t) dkj[t] += g * qi[t];
        }
    }
}

// out head slice = P * V_h (overwrites the slice)
template <class T>
void attn_mix_head(Mat<T>& out, const Mat<T>& probs, const Mat<T>& v, size_t off, size_t dh) {
    const size_t n = probs.rows;
    for (size_t i = 0; i < n; ++i) {
        const T* pi = probs.row(i);
        T* oi = out.row(i) + off;
        for (size_t t = 0; t < dh; ++t) oi[t] = T(0);
        for (size_t j = 0; j < n; ++j) {
            const T p = pi[j];
            const T* vj = v.row(j) + off;
            for (size_t t = 0; t < dh; ++t) oi[t] += p * vj[t];
        }
    }
}

// dprobs overwritten; dv head slice accumulated
template <class T>
void attn_mix_head_backward(Mat<T>& dprobs, Mat<T>& dv, const Mat<T>& dout, const Mat<T>& probs,
                            const Mat<T>& v, size_t off, size_t dh) {
    const size_t n = probs.rows;
    for (size_t i = 0; i < n; ++i) {
        const T* doi = dout.row(i) + off;
        T* dpi = dprobs.row(i);
        for (size_t j = 0; j < n; ++j) {
            const T* vj = v.row(j) + off;
            T acc = T(0);
            for (size_t t = 0; t < dh; ++t) acc += doi[t] * vj[t];
            dpi[j] = acc;
        }
    }
    for (size_t j = 0; j < n; ++j) {
        T* dvj = dv.row(j) + off;
        for (size_t i = 0; i < n; ++i) {
            const T p = probs(i, j);
            const T* doi = dout.row(i) + off;
            for (size_t t = 0; t < dh; ++t) dvj[t] += p * doi[t];
        }
    }
}

}  // namespace ref

template <class T>
void matmul_nn(Mat<T>& c, const Mat<T>& a, const Mat<T>& b, bool accumulate = false) {
    const size_t m = a.rows, k = a.cols, n = b.cols;
    if (a.cols != b.rows || c.rows != m || c.cols != n)
        throw ConfigError("matmul_nn: shape mismatch");
    if (m * n < kParallelCutoff) {
        ref::matmul_nn(c, a, b, accumulate);
        return;
    }
    T* cd = c.data.data();
    const T* ad = a.data.data();
    const T* bd = b.data.data();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < m; ++i) {
        T* __restrict ci = cd + i * n;
        if (!accumulate)
            for (size_t j = 0; j < n; ++j) ci[j] = T(0);
        const T* __restrict ai = ad + i * k;
        for (size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* __restrict bp = bd + p * n;
            for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

template <class T>
void matmul_nt(Mat<T>& c, const Mat<T>& a, const Mat<T>& b, bool accumulate = false) {
    const size_t m = a.rows, k = a.cols, n = b.rows;
    if (a.cols != b.cols || c.rows != m || c.cols != n)
        throw ConfigError("matmul_nt: shape mismatch");
    if (m * n < kParallelCutoff) {
        ref::matmul_nt(c, a, b, accumulate);
        return;
    }
    T* cd = c.data.data();
    const T* ad = a.data.data();
    const T* bd = b.data.data();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < m; ++i) {
        const T* __restrict ai = ad + i * k;
        T* __restrict ci = cd + i * n;
        for (size_t j = 0; j < n; ++j) {
            const T* __restrict bj = bd + j * k;
            T acc = T(0);
            for (size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

template <class T>
void matmul_tn(Mat<T>& c, const Mat<T>& a, const Mat<T>& b, bool accumulate = false) {
    const size_t k = a.rows, m = a.cols, n = b.cols;
    if (a.rows != b.rows || c.rows != m || c.cols != n)
        throw ConfigError("matmul_tn: shape mismatch");
    if (m * n < kParallelCutoff) {
        ref::matmul_tn(c, a, b, accumulate);
        return;
    }
    T* cd = c.data.data();
    const T* ad = a.data.data();
    const T* bd = b.data.data();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < m; ++i) {
        T* __restrict ci = cd + i * n;
        for (size_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (size_t p = 0; p < k; ++p) acc += ad[p * m + i] * bd[p * n + j];
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

template <class T>
void add_bias_rows(Mat<T>& x, const Mat<T>& bias) {
    if (bias.cols != x.cols) throw ConfigError("add_bias_rows: width mismatch");
    if (x.size() < kParallelCutoff) {
        ref::add_bias_rows(x, bias);
        return;
    }
    T* xd = x.data.data();
    const T* bd = bias.data.data();
    const size_t rows = x.rows, cols = x.cols;
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < rows; ++i) {
        T* __restrict xi = xd + i * cols;
        for (size_t j = 0; j < cols; ++j) xi[j] += bd[j];
    }
}

template <class T>
void axpy(Mat<T>& y, T alpha, const Mat<T>& x) {
    if (!y.same_shape(x)) throw ConfigError("axpy: shape mismatch");
    if (y.size() < kParallelCutoff) {
        ref::axpy(y, alpha, x);
        return;
    }
    T* yd = y.data.data();
    const T* xd = x.data.data();
    const size_t n = y.size();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) yd[i] += alpha * xd[i];
}

template <class T>
void gelu_forward(Mat<T>& out, const Mat<T>& in) {
    if (in.size() < kParallelCutoff) {
        ref::gelu_forward(out, in);
        return;
    }
    T* od = out.data.data();
    const T* id = in.data.data();
    const size_t n = in.size();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) od[i] = ref::gelu(id[i]);
}

template <class T>
void gelu_backward(Mat<T>& din, const Mat<T>& in, const Mat<T>& dout) {
    if (in.size() < kParallelCutoff) {
        ref::gelu_backward(din, in, dout);
        return;
    }
    T* dd = din.data.data();
    const T* id = in.data.data();
    const T* od = dout.data.data();
    const size_t n = in.size();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) dd[i] = od[i] * ref::gelu_grad(id[i]);
}

template <class T>
void layernorm_forward(Mat<T>& out, Mat<T>& mean, Mat<T>& rstd, const Mat<T>& in,
                       const Mat<T>& gamma, const Mat<T>& beta, T eps) {
    if (in.size() < kParallelCutoff) {
        ref::layernorm_forward(out, mean, rstd, in, gamma, beta, eps);
        return;
    }
    const size_t rows = in.rows, d = in.cols;
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < rows; ++i)
        ref::layernorm_row(in.row(i), out.row(i), mean.data[i], rstd.data[i],
                           gamma.data.data(), beta.data.data(), d, eps);
}

template <class T>
void layernorm_backward(Mat<T>& din, const Mat<T>& in, const Mat<T>& dout, const Mat<T>& mean,
                        const Mat<T>& rstd, const Mat<T>& gamma) {
    if (in.size() < kParallelCutoff) {
        ref::layernorm_backward(din, in, dout, mean, rstd, gamma);
        return;
    }
    const size_t rows = in.rows, d = in.cols;
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < rows; ++i)
        ref::layernorm_row_backward(in.row(i), dout.row(i), din.row(i), mean.data[i],
                                    rstd.data[i], gamma.data.data(), d);
}

template <class T>
void softmax_rows_masked(Mat<T>& out, const Mat<T>& scores, size_t valid_cols) {
    if (valid_cols == 0 || valid_cols > scores.cols)
        throw ConfigError("softmax_rows_masked: bad valid_cols");
    if (scores.size() < kParallelCutoff) {
        ref::softmax_rows_masked(out, scores, valid_cols);
        return;
    }
    const size_t rows = scores.rows, cols = scores.cols;
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < rows; ++i)
        ref::softmax_row_masked(scores.row(i), out.row(i), valid_cols, cols);
}

template <class T>
void softmax_backward_masked(Mat<T>& dscores, const Mat<T>& probs, const Mat<T>& dprobs,
                             size_t valid_cols) {
    if (probs.size() < kParallelCutoff) {
        ref::softmax_backward_masked(dscores, probs, dprobs, valid_cols);
        return;
    }
    const size_t rows = probs.rows, cols = probs.cols;
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < rows; ++i)
        ref::softmax_row_backward(probs.row(i), dprobs.row(i), dscores.row(i), valid_cols,
                                  cols);
}

template <class T>
void attn_scores_head(Mat<T>& s, const Mat<T>& q, const Mat<T>& k, size_t off, size_t dh,
                      T scale) {
    const size_t n = q.rows;
    if (n * n * dh < kParallelCutoff) {
        ref::attn_scores_head(s, q, k, off, dh, scale);
        return;
    }
    const size_t qc = q.cols, sc = s.cols;
    const T* qd = q.data.data();
    const T* kd = k.data.data();
    T* sd = s.data.data();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) {
        const T* __restrict qi = qd + i * qc + off;
        T* __restrict si = sd + i * sc;
        for (size_t j = 0; j < n; ++j) {
            const T* __restrict kj = kd + j * qc + off;
            T acc = T(0);
            for (size_t t = 0; t < dh; ++t) acc += qi[t] * kj[t];
            si[j] = acc * scale;
        }
    }
}

template <class T>
void attn_scores_head_backward(Mat<T>& dq, Mat<T>& dk, const Mat<T>& ds, const Mat<T>& q,
                               const Mat<T>& k, size_t off, size_t dh, T scale) {
    const size_t n = q.rows;
    if (n * n * dh < kParallelCutoff) {
        ref::attn_scores_head_backward(dq, dk, ds, q, k, off, dh, scale);
        return;
    }
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) {
        const T* dsi = ds.row(i);
        T* __restrict dqi = dq.row(i) + off;
        for (size_t j = 0; j < n; ++j) {
            const T g = dsi[j] * scale;
            const T* __restrict kj = k.row(j) + off;
            for (size_t t = 0; t < dh; ++t) dqi[t] += g * kj[t];
        }
    }
#pragma omp parallel for schedule(static)
    for (size_t j = 0; j < n; ++j) {
        T* __restrict dkj = dk.row(j) + off;
        for (size_t i = 0; i < n; ++i) {
            const T g = ds(i, j) * scale;
            const T* __restrict qi = q.row(i) + off;
            for (size_t t = 0; t < dh; ++t) dkj[t] += g * qi[t];
        }
    }
}

template <class T>
void attn_mix_head(Mat<T>& out, const Mat<T>& probs, const Mat<T>& v, size_t off, size_t dh) {
    const size_t n = probs.rows;
    if (n * n * dh < kParallelCutoff) {
        ref::attn_mix_head(out, probs, v, off, dh);
        return;
    }
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) {
        const T* pi = probs.row(i);
        T* __restrict oi = out.row(i) + off;
        for (size_t t = 0; t < dh; ++t) oi[t] = T(0);
        for (size_t j = 0; j < n; ++j) {
            const T p = pi[j];
            const T* __restrict vj = v.row(j) + off;
            for (size_t t = 0; t < dh; ++t) oi[t] += p * vj[t];
        }
    }
}

template <class T>
void attn_mix_head_backward(Mat<T>& dprobs, Mat<T>& dv, const Mat<T>& dout, const Mat<T>& probs,
                            const Mat<T>& v, size_t off, size_t dh) {
    const size_t n = probs.rows;
    if (n * n * dh < kParallelCutoff) {
        ref::attn_mix_head_backward(dprobs, dv, dout, probs, v, off, dh);
        return;
    }
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) {
        const T* __restrict doi = dout.row(i) + off;
        T* __restrict dpi = dprobs.row(i);
        for (size_t j = 0; j < n; ++j) {
            const T* __restrict vj = v.row(j) + off;
            T acc = T(0);
            for (size_t t = 0; t < dh; ++t) acc += doi[t] * vj[t];
            dpi[j] = acc;
        }
    }
#pragma omp parallel for schedule(static)
    for (size_t j = 0; j < n; ++j) {
        T* __restrict dvj = dv.row(j) + off;
        for (size_t i = 0; i < n; ++i) {
            const T p = probs(i, j);
            const T* __restrict doi = dout.row(i) + off;
            for (size_t t = 0; t < dh; ++t) dvj[t] += p * doi[t];
        }
    }
}

}  // namespace loid::kern
