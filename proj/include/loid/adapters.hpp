#pragma once

#include <string>
#include <vector>

#include "loid/encoder.hpp"

namespace loid {

// One low-rank pair per attach point: delta = B * A with B (out x r) starting
// at zero and A (r x in) Gaussian, so a fresh adapter is an exact identity.
template <class T>
struct LoraEntry {
    AttachPoint point;
    Mat<T> b;  // out x r
    Mat<T> a;  // r x in
};

template <class T>
struct LoraAdapter {
    size_t rank = 0;
    std::string source_task;
    std::vector<LoraEntry<T>> entries;

    const LoraEntry<T>* find(AttachPoint p) const {
        for (const auto& e : entries)
            if (e.point == p) return &e;
        return nullptr;
    }

    uint64_t checksum() const {
        uint64_t h = hash64_bytes(&rank, sizeof(rank));
        for (const auto& e : entries) {
            h = e.b.checksum() ^ (h * 0x100000001b3ull);
            h = e.a.checksum() ^ (h * 0x100000001b3ull);
        }
        return h;
    }
};

template <class T>
LoraAdapter<T> init_adapter(const EncoderConfig& cfg, const std::vector<AttachPoint>& points,
                            size_t rank, uint64_t seed, std::string source_task = "") {
    if (rank < 1) throw ConfigError("init_adapter: rank must be >= 1");
    Rng rng(seed);
    LoraAdapter<T> ad;
    ad.rank = rank;
    ad.source_task = std::move(source_task);
    for (const auto& pt : points) {
        if (pt.layer >= cfg.layers) throw ConfigError("init_adapter: attach point layer out of range");
        const auto [out, in] = attach_shape(cfg, pt.kind);
        if (rank >= std::min(out, in))
            throw ConfigError("init_adapter: rank must be below the attached matrix dimensions");
        LoraEntry<T> e;
        e.point = pt;
        e.b = Mat<T>(out, rank);
        e.a = randn_mat<T>(rank, in, T(0.02), rng);
        ad.entries.push_back(std::move(e));
    }
    return ad;
}

// W + B*A, leaving W untouched
template <class T>
Mat<T> apply_adapter(const Mat<T>& w, const Mat<T>& b, const Mat<T>& a) {
    if (b.rows != w.rows || a.cols != w.cols || b.cols != a.rows)
        throw ConfigError("apply_adapter: shape mismatch");
    Mat<T> out = w;
    kern::matmul_nn(out, b, a, true);
    return out;
}

template <class T>
struct DenseDelta {
    std::vector<std::pair<AttachPoint, Mat<T>>> entries;
};

template <class T>
DenseDelta<T> delta_of(const LoraAdapter<T>& adapter) {
    DenseDelta<T> d;
    for (const auto& e : adapter.entries) {
        Mat<T> m(e.b.rows, e.a.cols);
        kern::matmul_nn(m, e.b, e.a);
        d.entries.emplace_back(e.point, std::move(m));
    }
    return d;
}

// Zero each surviving entry with the given keep mask and rescale by 1/(1-p).
template <class T>
Mat<T> drop_rescale_masked(const Mat<T>& delta, const std::vector<uint8_t>& keep, T p) {
    if (p < T(0) || p >= T(1)) throw ConfigError("drop_rescale: p must be in [0,1)");
    if (keep.size() != delta.size()) throw ConfigError("drop_rescale: mask size mismatch");
    const T rescale = T(1) / (T(1) - p);
    Mat<T> out(delta.rows, delta.cols);
    for (size_t i = 0; i < delta.size(); ++i)
        out.data[i] = keep[i] ? delta.data[i] * rescale : T(0);
    return out;
}

// Elementwise Bernoulli drop with probability p on the materialized delta,
// survivors rescaled by 1/(1-p); unbiased for the original delta.
template <class T>
DenseDelta<T> dare_drop_rescale(const DenseDelta<T>& delta, T p, uint64_t seed) {
    if (p < T(0) || p >= T(1)) throw ConfigError("dare_drop_rescale: p must be in [0,1)");
    Rng rng(seed);
    DenseDelta<T> out;
    for (const auto& [pt, m] : delta.entries) {
        std::vector<uint8_t> keep(m.size());
        for (auto& kb : keep) kb = rng.uniform() < double(p) ? 0 : 1;
        out.entries.emplace_back(pt, drop_rescale_masked(m, keep, p));
    }
    return out;
}

template <class T>
struct MergeSpec {
    T p = T(0);
    uint64_t seed = 0;
    std::vector<const LoraAdapter<T>*> adapters;  // n >= 0
};

// merged = base + sum_i drop_rescale(delta_i, p, seed_i); base untouched.
// Per-adapter seeds derive from spec.seed and the adapter's position.
template <class T>
EncoderParams<T> dare_merge(const EncoderParams<T>& base, const MergeSpec<T>& spec) {
    if (spec.p < T(0) || spec.p >= T(1)) throw ConfigError("dare_merge: p must be in [0,1)");
    EncoderParams<T> merged = base;
    for (size_t i = 0; i < spec.adapters.size(); ++i) {
        const auto* ad = spec.adapters[i];
        if (ad == nullptr) throw ConfigError("dare_merge: null adapter");
        const auto dropped = dare_drop_rescale(delta_of(*ad), spec.p, derive_seed(spec.seed, i));
        for (const auto& [pt, m] : dropped.entries) {
            if (pt.layer >= merged.layers.size())
                throw ConfigError("dare_merge: attach point outside base");
            Mat<T>& w = merged.matrix_at(pt);
            if (!w.same_shape(m)) throw ConfigError("dare_merge: delta shape mismatch");
            kern::axpy(w, T(1), m);
        }
    }
    return merged;
}

// Base weights with every adapted matrix replaced by W + B*A.
template <class T>
EffWeights<T> materialize(const EncoderParams<T>& base, const LoraAdapter<T>* adapter) {
    EffWeights<T> eff = EffWeights<T>::from_base(base);
    if (adapter != nullptr) {
        for (const auto& e : adapter->entries) {
            if (e.point.layer >= base.layers.size())
                throw ConfigError("materialize: attach point outside base");
            Mat<T>& w = eff.matrix_at(e.point);
            if (e.b.rows != w.rows || e.a.cols != w.cols)
                throw ConfigError("materialize: adapter shape mismatch at layer " +
                                  std::to_string(e.point.layer));
            kern::matmul_nn(w, e.b, e.a, true);
        }
    }
    return eff;
}

template <class T>
std::vector<T> encode(const TokenSeq& tokens, const EncoderParams<T>& p,
                      const LoraAdapter<T>& adapter) {
    return encode(tokens, p, materialize(p, &adapter));
}

// Factor gradients recovered from the dense attachment-matrix gradients:
// dB = dW * A^T, dA = B^T * dW.
template <class T>
struct AdapterGrads {
    std::vector<Mat<T>> db, da;

    void init(const LoraAdapter<T>& ad) {
        db.clear();
        da.clear();
        for (const auto& e : ad.entries) {
            db.emplace_back(e.b.rows, e.b.cols);
            da.emplace_back(e.a.rows, e.a.cols);
        }
    }
    void zero() {
        for (auto& m : db) m.zero();
        for (auto& m : da) m.zero();
    }
};

template <class T>
void adapter_grads_from_dense(const LoraAdapter<T>& ad, EncGrads<T>& dense, AdapterGrads<T>& out) {
    for (size_t i = 0; i < ad.entries.size(); ++i) {
        const auto& e = ad.entries[i];
        const Mat<T>& dw = dense.matrix_at(e.point);
        kern::matmul_nt(out.db[i], dw, e.a);
        kern::matmul_tn(out.da[i], e.b, dw);
    }
}

}  // namespace loid
