#pragma once

// Dense row-major float32 tensor plus the flat matrix kernels the model is
// built from. Gradients live on the autodiff tape (tape.hpp), not here.

#include <cstdint>
#include <string>
#include <vector>

#include "eopt/common.hpp"

namespace eopt {

struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), data(count(shape), 0.0f) {}
    Tensor(std::vector<int64_t> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if (count(shape) != static_cast<int64_t>(data.size()))
            throw DimensionError("tensor shape " + shape_str() + " does not match " +
                                 std::to_string(data.size()) + " values");
    }

    static int64_t count(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int64_t> s, float v) {
        Tensor t(std::move(s));
        for (float& x : t.data) x = v;
        return t;
    }

    static Tensor randn(std::vector<int64_t> s, Rng& rng, float stddev) {
        Tensor t(std::move(s));
        for (float& x : t.data) x = static_cast<float>(rng.gauss(0.0, stddev));
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    size_t rank() const { return shape.size(); }
    int64_t dim(size_t i) const { return shape[i]; }

    // 2-D view used by the matrix kernels: all leading dims fold into rows.
    int64_t cols() const { return shape.empty() ? 1 : shape.back(); }
    int64_t rows() const { return shape.empty() ? 1 : numel() / cols(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const;

    std::string shape_str() const;
};

// ----------------------------- matrix kernels -----------------------------
// c[m x n] += a[m x k] * b[k x n], row-major, multithreaded over rows.
void gemm_accum(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);

// dst[n x m] = src[m x n]
void transpose(const float* src, float* dst, int64_t m, int64_t n);

}  // namespace eopt
