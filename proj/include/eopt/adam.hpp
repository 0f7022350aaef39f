#pragma once

#include "eopt/tensor.hpp"

namespace eopt {

// Bias-corrected Adam moments for one parameter tensor.
struct AdamState {
    Tensor first_moment;
    Tensor second_moment;
    int64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState like(const Tensor& params) {
        AdamState s;
        s.first_moment = Tensor::zeros(params.shape);
        s.second_moment = Tensor::zeros(params.shape);
        return s;
    }
};

// Standard update: m,v moment decay, bias correction, params -= lr * m^ / (sqrt(v^) + eps).
// Throws NumericError naming the offending index when a gradient is not finite.
void adam_step(Tensor& params, const Tensor& grads, AdamState& state, double lr);

}  // namespace eopt
