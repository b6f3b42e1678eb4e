#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loid/kernels.hpp"
#include "loid/vocab.hpp"

namespace loid {

// The five adapter attachment matrices of each block.
enum class MatKind : uint8_t { Q = 0, K, V, FFN_in, FFN_out };

inline const char* mat_kind_name(MatKind k) {
    switch (k) {
        case MatKind::Q: return "Q";
        case MatKind::K: return "K";
        case MatKind::V: return "V";
        case MatKind::FFN_in: return "FFN_in";
        case MatKind::FFN_out: return "FFN_out";
    }
    return "?";
}

struct AttachPoint {
    size_t layer = 0;
    MatKind kind = MatKind::Q;
    bool operator==(const AttachPoint&) const = default;
};

struct EncoderConfig {
    size_t dim = 64;
    size_t layers = 2;
    size_t heads = 2;
    size_t ffn_dim = 128;
    size_t max_len = 64;
    uint64_t seed = 42;

    void validate() const {
        if (dim == 0 || layers == 0 || heads == 0 || ffn_dim == 0 || max_len < 2)
            throw ConfigError("encoder config: zero-sized field");
        if (dim % heads != 0) throw ConfigError("encoder config: dim must be divisible by heads");
    }
};

// (out_dim, in_dim) of the base matrix at an attach point
inline std::pair<size_t, size_t> attach_shape(const EncoderConfig& cfg, MatKind kind) {
    switch (kind) {
        case MatKind::FFN_in: return {cfg.ffn_dim, cfg.dim};
        case MatKind::FFN_out: return {cfg.dim, cfg.ffn_dim};
        default: return {cfg.dim, cfg.dim};
    }
}

inline std::vector<AttachPoint> all_attach_points(const EncoderConfig& cfg) {
    std::vector<AttachPoint> pts;
    for (size_t l = 0; l < cfg.layers; ++l)
        for (MatKind k : {MatKind::Q, MatKind::K, MatKind::V, MatKind::FFN_in, MatKind::FFN_out})
            pts.push_back({l, k});
    return pts;
}

template <class T>
struct EncoderLayer {
    Mat<T> wq, wk, wv;       // d x d
    Mat<T> bq, bk, bv;       // 1 x d
    Mat<T> w_in, b_in;       // ffn x d, 1 x ffn
    Mat<T> w_out, b_out;     // d x ffn, 1 x d
    Mat<T> ln1_g, ln1_b;     // 1 x d
    Mat<T> ln2_g, ln2_b;     // 1 x d
};

// Frozen transformer weights. Nothing in the training stages may mutate an
// instance; the checksum is the audit handle for that contract.
template <class T>
struct EncoderParams {
    EncoderConfig cfg;
    size_t vocab_size = 0;
    Mat<T> tok_emb;          // |V| x d
    Mat<T> pos_emb;          // max_len x d
    Mat<T> ln_f_g, ln_f_b;   // 1 x d
    std::vector<EncoderLayer<T>> layers;

    const Mat<T>& matrix_at(AttachPoint p) const {
        const auto& l = layers.at(p.layer);
        switch (p.kind) {
            case MatKind::Q: return l.wq;
            case MatKind::K: return l.wk;
            case MatKind::V: return l.wv;
            case MatKind::FFN_in: return l.w_in;
            case MatKind::FFN_out: return l.w_out;
        }
        throw ConfigError("matrix_at: bad kind");
    }
    Mat<T>& matrix_at(AttachPoint p) {
        return const_cast<Mat<T>&>(static_cast<const EncoderParams*>(this)->matrix_at(p));
    }

    uint64_t checksum() const {
        uint64_t h = 0xcbf29ce484222325ull;
        auto mix = [&h](const Mat<T>& m) {
            h = hash64_bytes(m.data.data(), m.data.size() * sizeof(T), h);
        };
        mix(tok_emb);
        mix(pos_emb);
        mix(ln_f_g);
        mix(ln_f_b);
        for (const auto& l : layers) {
            mix(l.wq); mix(l.bq); mix(l.wk); mix(l.bk); mix(l.wv); mix(l.bv);
            mix(l.w_in); mix(l.b_in); mix(l.w_out); mix(l.b_out);
            mix(l.ln1_g); mix(l.ln1_b); mix(l.ln2_g); mix(l.ln2_b);
        }
        return h;
    }
};

template <class T>
EncoderParams<T> init_encoder(const EncoderConfig& cfg, size_t vocab_size) {
    cfg.validate();
    if (vocab_size < 3) throw ConfigError("init_encoder: vocab too small");
    Rng rng(cfg.seed);
    EncoderParams<T> p;
    p.cfg = cfg;
    p.vocab_size = vocab_size;
    const size_t d = cfg.dim, f = cfg.ffn_dim;
    p.tok_emb = randn_mat<T>(vocab_size, d, T(0.1), rng);
    p.pos_emb = randn_mat<T>(cfg.max_len, d, T(0.02), rng);
    p.ln_f_g = Mat<T>(1, d, T(1));
    p.ln_f_b = Mat<T>(1, d, T(0));
    const T s_attn = T(std::sqrt(2.0 / double(d + d)));
    const T s_in = T(std::sqrt(2.0 / double(d + f)));
    p.layers.resize(cfg.layers);
    for (auto& l : p.layers) {
        l.wq = randn_mat<T>(d, d, s_attn, rng);
        l.wk = randn_mat<T>(d, d, s_attn, rng);
        l.wv = randn_mat<T>(d, d, s_attn, rng);
        l.bq = Mat<T>(1, d);
        l.bk = Mat<T>(1, d);
        l.bv = Mat<T>(1, d);
        l.w_in = randn_mat<T>(f, d, s_in, rng);
        l.b_in = Mat<T>(1, f);
        l.w_out = randn_mat<T>(d, f, s_in, rng);
        l.b_out = Mat<T>(1, d);
        l.ln1_g = Mat<T>(1, d, T(1));
        l.ln1_b = Mat<T>(1, d);
        l.ln2_g = Mat<T>(1, d, T(1));
        l.ln2_b = Mat<T>(1, d);
    }
    return p;
}

// Materialized per-layer weights, adapted or plain copies of the base.
template <class T>
struct EffWeights {
    struct Layer {
        Mat<T> wq, wk, wv, w_in, w_out;
    };
    std::vector<Layer> layers;

    static EffWeights from_base(const EncoderParams<T>& p) {
        EffWeights e;
        e.layers.resize(p.layers.size());
        for (size_t i = 0; i < p.layers.size(); ++i) {
            e.layers[i].wq = p.layers[i].wq;
            e.layers[i].wk = p.layers[i].wk;
            e.layers[i].wv = p.layers[i].wv;
            e.layers[i].w_in = p.layers[i].w_in;
            e.layers[i].w_out = p.layers[i].w_out;
        }
        return e;
    }

    Mat<T>& matrix_at(AttachPoint p) {
        auto& l = layers.at(p.layer);
        switch (p.kind) {
            case MatKind::Q: return l.wq;
            case MatKind::K: return l.wk;
            case MatKind::V: return l.wv;
            case MatKind::FFN_in: return l.w_in;
            case MatKind::FFN_out: return l.w_out;
        }
        throw ConfigError("matrix_at: bad kind");
    }
};

template <class T>
struct LayerCache {
    Mat<T> x_in, a, q, k, v;
    Mat<T> ln1_mean, ln1_rstd;
    std::vector<Mat<T>> probs;       // per head, post-softmax pre-dropout
    std::vector<Mat<T>> drop_mask;   // per head, 0 or 1/(1-rate); empty at eval
    Mat<T> attn_out, x_mid, f;
    Mat<T> ln2_mean, ln2_rstd;
    Mat<T> h_pre, h_act, x_out;
};

template <class T>
struct EncodeCache {
    size_t len = 0;
    Mat<T> x0;
    std::vector<LayerCache<T>> layers;
    Mat<T> y;
    Mat<T> ln_f_mean, ln_f_rstd;

    std::vector<T> cls() const {
        return std::vector<T>(y.row(0), y.row(0) + y.cols);
    }
};

// Dense gradients w.r.t. the five attachment matrices of each layer; the
// adapter factor gradients are derived from these.
template <class T>
struct EncGrads {
    std::vector<typename EffWeights<T>::Layer> layers;

    void init(const EncoderParams<T>& p) {
        const size_t d = p.cfg.dim, f = p.cfg.ffn_dim;
        layers.assign(p.layers.size(), {});
        for (auto& l : layers) {
            l.wq = Mat<T>(d, d);
            l.wk = Mat<T>(d, d);
            l.wv = Mat<T>(d, d);
            l.w_in = Mat<T>(f, d);
            l.w_out = Mat<T>(d, f);
        }
    }
    void zero() {
        for (auto& l : layers) {
            l.wq.zero(); l.wk.zero(); l.wv.zero(); l.w_in.zero(); l.w_out.zero();
        }
    }
    void add(const EncGrads& o) {
        for (size_t i = 0; i < layers.size(); ++i) {
            kern::axpy(layers[i].wq, T(1), o.layers[i].wq);
            kern::axpy(layers[i].wk, T(1), o.layers[i].wk);
            kern::axpy(layers[i].wv, T(1), o.layers[i].wv);
            kern::axpy(layers[i].w_in, T(1), o.layers[i].w_in);
            kern::axpy(layers[i].w_out, T(1), o.layers[i].w_out);
        }
    }
    Mat<T>& matrix_at(AttachPoint p) {
        auto& l = layers.at(p.layer);
        switch (p.kind) {
            case MatKind::Q: return l.wq;
            case MatKind::K: return l.wk;
            case MatKind::V: return l.wv;
            case MatKind::FFN_in: return l.w_in;
            case MatKind::FFN_out: return l.w_out;
        }
        throw ConfigError("matrix_at: bad kind");
    }
};

namespace detail {

template <class T>
void reshape(Mat<T>& m, size_t r, size_t c) {
    m.rows = r;
    m.cols = c;
    m.data.assign(r * c, T(0));
}

}  // namespace detail

// Forward pass over the valid prefix of `tokens`. Padding positions are never
// materialized, so output is exactly invariant to trailing [PAD].
// `rng` non-null enables attention-probability dropout at `dropout_rate`.
template <class T>
void encode_forward(const TokenSeq& tokens, const EncoderParams<T>& p, const EffWeights<T>& eff,
                    EncodeCache<T>& cache, T dropout_rate = T(0), Rng* rng = nullptr) {
    const EncoderConfig& cfg = p.cfg;
    const size_t L = tokens.valid_len;
    const size_t d = cfg.dim, f = cfg.ffn_dim, nh = cfg.heads, dh = d / nh;
    if (L == 0 || L > cfg.max_len) throw ConfigError("encode: bad sequence length");

    cache.len = L;
    detail::reshape(cache.x0, L, d);
    for (size_t i = 0; i < L; ++i) {
        const int32_t id = tokens.ids[i];
        if (id < 0 || size_t(id) >= p.vocab_size) throw DataError("encode: token id out of range");
        const T* te = p.tok_emb.row(size_t(id));
        const T* pe = p.pos_emb.row(i);
        T* xi = cache.x0.row(i);
        for (size_t j = 0; j < d; ++j) xi[j] = te[j] + pe[j];
    }

    cache.layers.resize(cfg.layers);
    const T scale = T(1) / T(std::sqrt(double(dh)));
    const Mat<T>* x = &cache.x0;
    const bool train_drop = rng != nullptr && dropout_rate > T(0);

    for (size_t li = 0; li < cfg.layers; ++li) {
        auto& lc = cache.layers[li];
        const auto& lp = p.layers[li];
        const auto& le = eff.layers[li];
        lc.x_in = *x;

        detail::reshape(lc.a, L, d);
        detail::reshape(lc.ln1_mean, L, 1);
        detail::reshape(lc.ln1_rstd, L, 1);
        kern::layernorm_forward(lc.a, lc.ln1_mean, lc.ln1_rstd, lc.x_in, lp.ln1_g, lp.ln1_b,
                                T(1e-5));

        detail::reshape(lc.q, L, d);
        detail::reshape(lc.k, L, d);
        detail::reshape(lc.v, L, d);
        kern::matmul_nt(lc.q, lc.a, le.wq);
        kern::add_bias_rows(lc.q, lp.bq);
        kern::matmul_nt(lc.k, lc.a, le.wk);
        kern::add_bias_rows(lc.k, lp.bk);
        kern::matmul_nt(lc.v, lc.a, le.wv);
        kern::add_bias_rows(lc.v, lp.bv);

        lc.probs.resize(nh);
        lc.drop_mask.resize(train_drop ? nh : 0);
        detail::reshape(lc.attn_out, L, d);
        Mat<T> scores(L, L);
        for (size_t h = 0; h < nh; ++h) {
            const size_t off = h * dh;
            kern::attn_scores_head(scores, lc.q, lc.k, off, dh, scale);
            detail::reshape(lc.probs[h], L, L);
            kern::softmax_rows_masked(lc.probs[h], scores, L);
            const Mat<T>* mixp = &lc.probs[h];
            Mat<T> dropped;
            if (train_drop) {
                // mask drawn in fixed row-major order from the caller's stream
                auto& mask = lc.drop_mask[h];
                detail::reshape(mask, L, L);
                const T keep_scale = T(1) / (T(1) - dropout_rate);
                for (size_t e = 0; e < mask.size(); ++e)
                    mask.data[e] = rng->uniform() < double(dropout_rate) ? T(0) : keep_scale;
                dropped = lc.probs[h];
                for (size_t e = 0; e < dropped.size(); ++e) dropped.data[e] *= mask.data[e];
                mixp = &dropped;
            }
            kern::attn_mix_head(lc.attn_out, *mixp, lc.v, off, dh);
        }

        lc.x_mid = lc.x_in;
        kern::axpy(lc.x_mid, T(1), lc.attn_out);

        detail::reshape(lc.f, L, d);
        detail::reshape(lc.ln2_mean, L, 1);
        detail::reshape(lc.ln2_rstd, L, 1);
        kern::layernorm_forward(lc.f, lc.ln2_mean, lc.ln2_rstd, lc.x_mid, lp.ln2_g, lp.ln2_b,
                                T(1e-5));

        detail::reshape(lc.h_pre, L, f);
        kern::matmul_nt(lc.h_pre, lc.f, le.w_in);
        kern::add_bias_rows(lc.h_pre, lp.b_in);
        detail::reshape(lc.h_act, L, f);
        kern::gelu_forward(lc.h_act, lc.h_pre);

        detail::reshape(lc.x_out, L, d);
        kern::matmul_nt(lc.x_out, lc.h_act, le.w_out);
        kern::add_bias_rows(lc.x_out, lp.b_out);
        kern::axpy(lc.x_out, T(1), lc.x_mid);

        x = &lc.x_out;
    }

    detail::reshape(cache.y, L, d);
    detail::reshape(cache.ln_f_mean, L, 1);
    detail::reshape(cache.ln_f_rstd, L, 1);
    kern::layernorm_forward(cache.y, cache.ln_f_mean, cache.ln_f_rstd, *x, p.ln_f_g, p.ln_f_b,
                            T(1e-5));
}

// Backward from a gradient on the [CLS] output row. Accumulates dense
// attachment-matrix gradients into `grads`; base biases, norms and embeddings
// are frozen and get none.
template <class T>
void encode_backward(const EncoderParams<T>& p, const EffWeights<T>& eff,
                     const EncodeCache<T>& cache, const std::vector<T>& dcls, EncGrads<T>& grads) {
    const EncoderConfig& cfg = p.cfg;
    const size_t L = cache.len, d = cfg.dim, f = cfg.ffn_dim, nh = cfg.heads, dh = d / nh;
    if (dcls.size() != d) throw ConfigError("encode_backward: dcls width mismatch");
    const T scale = T(1) / T(std::sqrt(double(dh)));

    Mat<T> dy(L, d);
    for (size_t j = 0; j < d; ++j) dy(0, j) = dcls[j];

    const Mat<T>& x_last = cfg.layers > 0 ? cache.layers.back().x_out : cache.x0;
    Mat<T> dx(L, d);
    kern::layernorm_backward(dx, x_last, dy, cache.ln_f_mean, cache.ln_f_rstd, p.ln_f_g);

    Mat<T> df(L, d), dh_act(L, f), dh_pre(L, f), da(L, d);
    Mat<T> dq(L, d), dk(L, d), dv(L, d), dprobs(L, L), dscores(L, L);
    for (size_t li = cfg.layers; li-- > 0;) {
        const auto& lc = cache.layers[li];
        const auto& lp = p.layers[li];
        const auto& le = eff.layers[li];
        auto& lg = grads.layers[li];

        // ffn block: dx covers both the residual branch and ffn_out
        kern::matmul_tn(lg.w_out, dx, lc.h_act, true);
        kern::matmul_nn(dh_act, dx, le.w_out);
        kern::gelu_backward(dh_pre, lc.h_pre, dh_act);
        kern::matmul_tn(lg.w_in, dh_pre, lc.f, true);
        kern::matmul_nn(df, dh_pre, le.w_in);
        kern::layernorm_backward(da, lc.x_mid, df, lc.ln2_mean, lc.ln2_rstd, lp.ln2_g);
        kern::axpy(dx, T(1), da);

        // attention block
        dq.zero();
        dk.zero();
        dv.zero();
        const bool dropped = !lc.drop_mask.empty();
        for (size_t h = 0; h < nh; ++h) {
            const size_t off = h * dh;
            if (dropped) {
                Mat<T> probs_used = lc.probs[h];
                for (size_t e = 0; e < probs_used.size(); ++e)
                    probs_used.data[e] *= lc.drop_mask[h].data[e];
                kern::attn_mix_head_backward(dprobs, dv, dx, probs_used, lc.v, off, dh);
                for (size_t e = 0; e < dprobs.size(); ++e)
                    dprobs.data[e] *= lc.drop_mask[h].data[e];
            } else {
                kern::attn_mix_head_backward(dprobs, dv, dx, lc.probs[h], lc.v, off, dh);
            }
            kern::softmax_backward_masked(dscores, lc.probs[h], dprobs, L);
            kern::attn_scores_head_backward(dq, dk, dscores, lc.q, lc.k, off, dh, scale);
        }

        kern::matmul_tn(lg.wq, dq, lc.a, true);
        kern::matmul_tn(lg.wk, dk, lc.a, true);
        kern::matmul_tn(lg.wv, dv, lc.a, true);
        Mat<T> da_attn(L, d);
        kern::matmul_nn(da_attn, dq, le.wq);
        kern::matmul_nn(da_attn, dk, le.wk, true);
        kern::matmul_nn(da_attn, dv, le.wv, true);
        kern::layernorm_backward(da, lc.x_in, da_attn, lc.ln1_mean, lc.ln1_rstd, lp.ln1_g);
        kern::axpy(dx, T(1), da);
    }
}

// Pooled content embedding of one review (the [CLS] row), dropout disabled.
template <class T>
std::vector<T> encode(const TokenSeq& tokens, const EncoderParams<T>& p, const EffWeights<T>& eff) {
    EncodeCache<T> cache;
    encode_forward(tokens, p, eff, cache);
    return cache.cls();
}

template <class T>
std::vector<T> encode(const TokenSeq& tokens, const EncoderParams<T>& p) {
    return encode(tokens, p, EffWeights<T>::from_base(p));
}

}  // namespace loid
