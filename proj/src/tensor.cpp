#include "eopt/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace eopt {

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

// One output row: c[0..n) += sum_k a_row[k] * b[k][0..n).
// The j loop vectorizes; no zero-skip shortcuts so NaN propagation stays exact.
inline void gemm_row(const float* a_row, const float* b, float* c_row, int64_t k, int64_t n) {
    for (int64_t kk = 0; kk < k; ++kk) {
        const float aik = a_row[kk];
        const float* b_row = b + kk * n;
        for (int64_t j = 0; j < n; ++j) c_row[j] += aik * b_row[j];
    }
}

}  // namespace

void gemm_accum(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    // below ~2 MFLOP the pool dispatch costs more than it saves
    const int64_t flops = m * k * n;
    if (flops < (1 << 21) || m == 1) {
        for (int64_t i = 0; i < m; ++i) gemm_row(a + i * k, b, c + i * n, k, n);
        return;
    }
    parallel_for(m, [=](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) gemm_row(a + i * k, b, c + i * n, k, n);
    });
}

void transpose(const float* src, float* dst, int64_t m, int64_t n) {
    constexpr int64_t B = 32;
    for (int64_t i0 = 0; i0 < m; i0 += B) {
        const int64_t i1 = std::min(i0 + B, m);
        for (int64_t j0 = 0; j0 < n; j0 += B) {
            const int64_t j1 = std::min(j0 + B, n);
            for (int64_t i = i0; i < i1; ++i)
                for (int64_t j = j0; j < j1; ++j) dst[j * m + i] = src[i * n + j];
        }
    }
}

}  // namespace eopt
