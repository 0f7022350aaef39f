#include "eopt/grad_check.hpp"

#include <cmath>

namespace eopt {

GradCheckReport grad_check(const std::function<NodeId(Tape&, NodeId)>& scalar_fn,
                           const Tensor& at, double tolerance, double step) {
    // analytic gradient
    Tape tape;
    NodeId leaf = tape.input(at);
    NodeId root = scalar_fn(tape, leaf);
    tape.backward(root);
    const Tensor analytic = tape.grad(leaf);

    auto eval = [&](const Tensor& x) -> double {
        Tape t;
        NodeId l = t.input(x);
        NodeId r = scalar_fn(t, l);
        return t.scalar(r);
    };

    const int64_t n = at.numel();
    std::vector<double> numeric(static_cast<size_t>(n));
    Tensor probe = at;
    double gmax = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const float saved = probe.data[i];
        // the step scales with the coordinate so float32 quantization of
        // large inputs does not drown the difference
        const double h = step * std::max(1.0, std::fabs(static_cast<double>(saved)));
        const float plus = static_cast<float>(saved + h);
        const float minus = static_cast<float>(saved - h);
        probe.data[i] = plus;
        const double fp = eval(probe);
        probe.data[i] = minus;
        const double fm = eval(probe);
        probe.data[i] = saved;
        const double realized = static_cast<double>(plus) - static_cast<double>(minus);
        numeric[i] = (fp - fm) / realized;
        gmax = std::max(gmax, std::fabs(numeric[i]));
    }

    // relative error with a floor at 5% of the largest gradient entry:
    // float32 forward noise is absolute, so near-zero coordinates are held
    // to an absolute rather than relative standard
    GradCheckReport report;
    for (int64_t i = 0; i < n; ++i) {
        const double a = analytic.data[i];
        const double d = std::fabs(a - numeric[i]);
        const double scale = std::max({std::fabs(a), std::fabs(numeric[i]), 0.05 * gmax, 1e-8});
        const double rel = d / scale;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    report.pass = report.max_rel_error < tolerance;
    return report;
}

}  // namespace eopt
