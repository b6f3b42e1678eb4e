#pragma once

#include <cmath>
#include <vector>

#include "loid/kernels.hpp"

namespace loid {

// Trainable per-entity vectors carrying the collaborative-filtering signal.
template <class T>
struct IdEmbeddings {
    Mat<T> user;  // |U| x d
    Mat<T> item;  // |I| x d

    static IdEmbeddings init(size_t n_users, size_t n_items, size_t dim, uint64_t seed) {
        if (n_users == 0 || n_items == 0) throw ConfigError("IdEmbeddings: empty entity table");
        Rng rng(seed);
        IdEmbeddings e;
        e.user = randn_mat<T>(n_users, dim, T(0.02), rng);
        e.item = randn_mat<T>(n_items, dim, T(0.02), rng);
        return e;
    }
};

// Two-layer ReLU perceptron to a scalar rating estimate.
template <class T>
struct PredictHead {
    Mat<T> w1;  // hidden x in
    Mat<T> b1;  // 1 x hidden
    Mat<T> w2;  // 1 x hidden
    Mat<T> b2;  // 1 x 1

    size_t in_dim() const { return w1.cols; }
    size_t hidden_dim() const { return w1.rows; }

    static PredictHead init(size_t in, size_t hidden, uint64_t seed) {
        Rng rng(seed);
        PredictHead h;
        h.w1 = randn_mat<T>(hidden, in, T(std::sqrt(2.0 / double(in))), rng);
        h.b1 = Mat<T>(1, hidden);
        h.w2 = randn_mat<T>(1, hidden, T(std::sqrt(2.0 / double(hidden))), rng);
        h.b2 = Mat<T>(1, 1);
        return h;
    }
};

template <class T>
struct HeadCache {
    std::vector<T> x;
    std::vector<T> h_pre, h_act;
    std::vector<T> drop_mask;  // empty at eval
};

template <class T>
T predict_forward(const PredictHead<T>& head, const std::vector<T>& x, HeadCache<T>& cache,
                  T dropout_rate = T(0), Rng* rng = nullptr) {
    const size_t in = head.in_dim(), hid = head.hidden_dim();
    if (x.size() != in) throw ConfigError("predict: feature width mismatch");
    cache.x = x;
    cache.h_pre.assign(hid, T(0));
    cache.h_act.assign(hid, T(0));
    for (size_t i = 0; i < hid; ++i) {
        const T* wi = head.w1.row(i);
        T acc = head.b1.data[i];
        for (size_t j = 0; j < in; ++j) acc += wi[j] * x[j];
        cache.h_pre[i] = acc;
        cache.h_act[i] = acc > T(0) ? acc : T(0);
    }
    if (rng != nullptr && dropout_rate > T(0)) {
        cache.drop_mask.assign(hid, T(0));
        const T keep_scale = T(1) / (T(1) - dropout_rate);
        for (size_t i = 0; i < hid; ++i) {
            cache.drop_mask[i] = rng->uniform() < double(dropout_rate) ? T(0) : keep_scale;
            cache.h_act[i] *= cache.drop_mask[i];
        }
    } else {
        cache.drop_mask.clear();
    }
    T out = head.b2.data[0];
    for (size_t i = 0; i < hid; ++i) out += head.w2.data[i] * cache.h_act[i];
    return out;
}

template <class T>
T predict(const PredictHead<T>& head, const std::vector<T>& x) {
    HeadCache<T> cache;
    return predict_forward(head, x, cache);
}

template <class T>
struct HeadGrads {
    Mat<T> w1, b1, w2, b2;

    void init(const PredictHead<T>& h) {
        w1 = Mat<T>(h.w1.rows, h.w1.cols);
        b1 = Mat<T>(1, h.b1.cols);
        w2 = Mat<T>(1, h.w2.cols);
        b2 = Mat<T>(1, 1);
    }
    void zero() { w1.zero(); b1.zero(); w2.zero(); b2.zero(); }
    void add(const HeadGrads& o) {
        kern::axpy(w1, T(1), o.w1);
        kern::axpy(b1, T(1), o.b1);
        kern::axpy(w2, T(1), o.w2);
        kern::axpy(b2, T(1), o.b2);
    }
};

// accumulates into grads and dx
template <class T>
void predict_backward(const PredictHead<T>& head, const HeadCache<T>& cache, T dout,
                      HeadGrads<T>& grads, std::vector<T>& dx) {
    const size_t in = head.in_dim(), hid = head.hidden_dim();
    grads.b2.data[0] += dout;
    for (size_t i = 0; i < hid; ++i) {
        grads.w2.data[i] += dout * cache.h_act[i];
        T dh = dout * head.w2.data[i];
        if (!cache.drop_mask.empty()) dh *= cache.drop_mask[i];
        if (cache.h_pre[i] <= T(0)) dh = T(0);
        grads.b1.data[i] += dh;
        T* gw1 = grads.w1.row(i);
        const T* w1i = head.w1.row(i);
        for (size_t j = 0; j < in; ++j) {
            gw1[j] += dh * cache.x[j];
            dx[j] += dh * w1i[j];
        }
    }
}

// Optional learned projections inside the fusion attention.
template <class T>
struct FusionParams {
    bool enabled = false;
    Mat<T> pq, pk, pv;  // d x d each

    static FusionParams projections(size_t dim, uint64_t seed) {
        Rng rng(seed);
        const T s = T(std::sqrt(1.0 / double(dim)));
        FusionParams f;
        f.enabled = true;
        f.pq = randn_mat<T>(dim, dim, s, rng);
        f.pk = randn_mat<T>(dim, dim, s, rng);
        f.pv = randn_mat<T>(dim, dim, s, rng);
        return f;
    }
};

template <class T>
struct FusionGrads {
    Mat<T> pq, pk, pv;
    void init(size_t dim) {
        pq = Mat<T>(dim, dim);
        pk = Mat<T>(dim, dim);
        pv = Mat<T>(dim, dim);
    }
    void zero() { pq.zero(); pk.zero(); pv.zero(); }
    void add(const FusionGrads& o) {
        kern::axpy(pq, T(1), o.pq);
        kern::axpy(pk, T(1), o.pk);
        kern::axpy(pv, T(1), o.pv);
    }
};

template <class T>
struct FuseCache {
    std::vector<T> query;
    Mat<T> contents;          // k x d as given
    std::vector<T> qp;        // projected query (== query when no projections)
    Mat<T> keys, values;      // projected contents (== contents when none)
    std::vector<T> weights;   // softmax over k
    bool residual = true;
};

// Scaled dot-product read of k content embeddings by the ID-embedding query:
//   w_j = softmax_j(q . c_j / sqrt(d)),  out = [query +] sum_j w_j c_j
template <class T>
std::vector<T> fuse_forward(const std::vector<T>& query, const Mat<T>& contents,
                            const FusionParams<T>* proj, bool residual, FuseCache<T>& cache) {
    const size_t k = contents.rows, d = contents.cols;
    if (k == 0) throw ConfigError("fuse: needs at least one content embedding");
    if (query.size() != d) throw ConfigError("fuse: width mismatch");

    cache.query = query;
    cache.contents = contents;
    cache.residual = residual;
    const bool pr = proj != nullptr && proj->enabled;
    if (pr) {
        cache.qp.assign(d, T(0));
        for (size_t i = 0; i < d; ++i) {
            const T* row = proj->pq.row(i);
            T acc = T(0);
            for (size_t j = 0; j < d; ++j) acc += row[j] * query[j];
            cache.qp[i] = acc;
        }
        cache.keys = Mat<T>(k, d);
        cache.values = Mat<T>(k, d);
        kern::matmul_nt(cache.keys, contents, proj->pk);
        kern::matmul_nt(cache.values, contents, proj->pv);
    } else {
        cache.qp = query;
        cache.keys = contents;
        cache.values = contents;
    }

    const T scale = T(1) / T(std::sqrt(double(d)));
    std::vector<T> scores(k);
    for (size_t j = 0; j < k; ++j) {
        const T* cj = cache.keys.row(j);
        T acc = T(0);
        for (size_t t = 0; t < d; ++t) acc += cache.qp[t] * cj[t];
        scores[j] = acc * scale;
    }
    T mx = scores[0];
    for (size_t j = 1; j < k; ++j) mx = std::max(mx, scores[j]);
    T sum = T(0);
    cache.weights.assign(k, T(0));
    for (size_t j = 0; j < k; ++j) {
        cache.weights[j] = std::exp(scores[j] - mx);
        sum += cache.weights[j];
    }
    for (size_t j = 0; j < k; ++j) cache.weights[j] /= sum;

    std::vector<T> out = residual ? query : std::vector<T>(d, T(0));
    for (size_t j = 0; j < k; ++j) {
        const T w = cache.weights[j];
        const T* vj = cache.values.row(j);
        for (size_t t = 0; t < d; ++t) out[t] += w * vj[t];
    }
    return out;
}

template <class T>
std::vector<T> fuse(const std::vector<T>& query, const Mat<T>& contents) {
    FuseCache<T> cache;
    return fuse_forward<T>(query, contents, nullptr, true, cache);
}

// accumulates dquery and dcontents (k x d); fusion grads only when projecting
template <class T>
void fuse_backward(const FusionParams<T>* proj, const FuseCache<T>& cache,
                   const std::vector<T>& dout, std::vector<T>& dquery, Mat<T>& dcontents,
                   FusionGrads<T>* fgrads) {
    const size_t k = cache.contents.rows, d = cache.contents.cols;
    const T scale = T(1) / T(std::sqrt(double(d)));
    const bool pr = proj != nullptr && proj->enabled;

    if (cache.residual)
        for (size_t t = 0; t < d; ++t) dquery[t] += dout[t];

    // through the weighted sum
    std::vector<T> dweights(k, T(0));
    Mat<T> dvalues(k, d);
    for (size_t j = 0; j < k; ++j) {
        const T* vj = cache.values.row(j);
        T* dvj = dvalues.row(j);
        T acc = T(0);
        for (size_t t = 0; t < d; ++t) {
            acc += dout[t] * vj[t];
            dvj[t] = cache.weights[j] * dout[t];
        }
        dweights[j] = acc;
    }

    // softmax
    T dot = T(0);
    for (size_t j = 0; j < k; ++j) dot += dweights[j] * cache.weights[j];
    std::vector<T> dscores(k);
    for (size_t j = 0; j < k; ++j) dscores[j] = cache.weights[j] * (dweights[j] - dot) * scale;

    // scores = qp . key_j
    std::vector<T> dqp(d, T(0));
    Mat<T> dkeys(k, d);
    for (size_t j = 0; j < k; ++j) {
        const T* kj = cache.keys.row(j);
        T* dkj = dkeys.row(j);
        for (size_t t = 0; t < d; ++t) {
            dqp[t] += dscores[j] * kj[t];
            dkj[t] = dscores[j] * cache.qp[t];
        }
    }

    if (pr) {
        // qp = Pq q, keys = C Pk^T, values = C Pv^T
        for (size_t i = 0; i < d; ++i) {
            const T* pqi = proj->pq.row(i);
            T* gq = fgrads->pq.row(i);
            for (size_t j = 0; j < d; ++j) {
                dquery[j] += dqp[i] * pqi[j];
                gq[j] += dqp[i] * cache.query[j];
            }
        }
        kern::matmul_tn(fgrads->pk, dkeys, cache.contents, true);
        kern::matmul_nn(dcontents, dkeys, proj->pk, true);
        kern::matmul_tn(fgrads->pv, dvalues, cache.contents, true);
        kern::matmul_nn(dcontents, dvalues, proj->pv, true);
    } else {
        for (size_t t = 0; t < d; ++t) dquery[t] += dqp[t];
        for (size_t j = 0; j < k; ++j) {
            T* dcj = dcontents.row(j);
            const T* dkj = dkeys.row(j);
            const T* dvj = dvalues.row(j);
            for (size_t t = 0; t < d; ++t) dcj[t] += dkj[t] + dvj[t];
        }
    }
}

template <class T>
T mse_loss(const std::vector<T>& predictions, const std::vector<T>& targets) {
    if (predictions.empty() || predictions.size() != targets.size())
        throw ConfigError("mse_loss: empty or mismatched inputs");
    T acc = T(0);
    for (size_t i = 0; i < predictions.size(); ++i) {
        const T e = predictions[i] - targets[i];
        acc += e * e;
    }
    return acc / T(predictions.size());
}

template <class T>
T squared_distance(const std::vector<T>& a, const std::vector<T>& b) {
    T acc = T(0);
    for (size_t i = 0; i < a.size(); ++i) {
        const T d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

// Two symmetric hinges per sample:
//   max(0, m + D(v_i, p_u+) - D(v_i, p_u-)) + max(0, m + D(v_u, p_i+) - D(v_u, p_i-))
template <class T>
T triplet_loss(const std::vector<T>& v_i, const std::vector<T>& p_u_pos,
               const std::vector<T>& p_u_neg, const std::vector<T>& v_u,
               const std::vector<T>& p_i_pos, const std::vector<T>& p_i_neg, T margin) {
    if (margin <= T(0)) throw ConfigError("triplet_loss: margin must be > 0");
    const T a1 = margin + squared_distance(v_i, p_u_pos) - squared_distance(v_i, p_u_neg);
    const T a2 = margin + squared_distance(v_u, p_i_pos) - squared_distance(v_u, p_i_neg);
    return std::max(T(0), a1) + std::max(T(0), a2);
}

// One hinge max(0, m + D(anchor,pos) - D(anchor,neg)); accumulates gradients.
template <class T>
T hinge_term_backward(const std::vector<T>& anchor, const std::vector<T>& pos,
                      const std::vector<T>& neg, T margin, T dout, std::vector<T>& danchor,
                      std::vector<T>& dpos, std::vector<T>& dneg) {
    const T arg = margin + squared_distance(anchor, pos) - squared_distance(anchor, neg);
    if (arg <= T(0)) return T(0);
    for (size_t t = 0; t < anchor.size(); ++t) {
        const T dp = T(2) * (anchor[t] - pos[t]);
        const T dn = T(2) * (anchor[t] - neg[t]);
        danchor[t] += dout * (dp - dn);
        dpos[t] += dout * (-dp);
        dneg[t] += dout * dn;
    }
    return arg;
}

template <class T>
T total_loss(T l_rec, T l_cl, T lambda) {
    if (lambda < T(0)) throw ConfigError("total_loss: lambda must be >= 0");
    return l_rec + lambda * l_cl;
}

}  // namespace loid
