#include "eopt/adam.hpp"

#include <cmath>

namespace eopt {

void adam_step(Tensor& params, const Tensor& grads, AdamState& state, double lr) {
    if (!params.same_shape(grads) || !params.same_shape(state.first_moment))
        throw DimensionError("adam_step shape mismatch: params " + params.shape_str() +
                             ", grads " + grads.shape_str());
    const int64_t n = params.numel();
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(grads.data[i]))
            throw NumericError("non-finite gradient at parameter index " + std::to_string(i));
    }
    state.step_count += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    float* p = params.data.data();
    float* m = state.first_moment.data.data();
    float* v = state.second_moment.data.data();
    const float* g = grads.data.data();
    for (int64_t i = 0; i < n; ++i) {
        const double gi = g[i];
        const double mi = b1 * m[i] + (1.0 - b1) * gi;
        const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        const double mhat = mi / corr1;
        const double vhat = vi / corr2;
        p[i] = static_cast<float>(p[i] - lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
}

}  // namespace eopt
