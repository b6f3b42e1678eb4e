#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "loid/common.hpp"

namespace loid {

// Dense row-major matrix. Weight matrices are stored (out_dim x in_dim),
// activations (seq_len x dim).
template <class T>
struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<T> data;

    Mat() = default;
    Mat(size_t r, size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

    T& operator()(size_t i, size_t j) { return data[i * cols + j]; }
    const T& operator()(size_t i, size_t j) const { return data[i * cols + j]; }

    T* row(size_t i) { return data.data() + i * cols; }
    const T* row(size_t i) const { return data.data() + i * cols; }

    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(T(0)); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    uint64_t checksum() const {
        uint64_t h = hash64_bytes(&rows, sizeof(rows));
        h = hash64_bytes(&cols, sizeof(cols), h);
        return hash64_bytes(data.data(), data.size() * sizeof(T), h);
    }
};

template <class T>
Mat<T> randn_mat(size_t rows, size_t cols, T stddev, Rng& rng) {
    Mat<T> m(rows, cols);
    for (auto& v : m.data) v = T(rng.normal(0.0, double(stddev)));
    return m;
}

template <class T, class U>
Mat<T> mat_cast(const Mat<U>& m) {
    Mat<T> out(m.rows, m.cols);
    for (size_t i = 0; i < m.size(); ++i) out.data[i] = T(m.data[i]);
    return out;
}

template <class T>
T max_abs_diff(const Mat<T>& a, const Mat<T>& b) {
    T worst = T(0);
    for (size_t i = 0; i < a.size(); ++i) {
        const T d = std::abs(a.data[i] - b.data[i]);
        if (d > worst) worst = d;
    }
    return worst;
}

}  // namespace loid
