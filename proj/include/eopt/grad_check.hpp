#pragma once

// Finite-difference validation of reverse-mode gradients. The checked
// function must produce a scalar node (compose with Tape::sum if needed).

#include <functional>

#include "eopt/tape.hpp"

namespace eopt {

struct GradCheckReport {
    double max_rel_error = 0.0;
    int64_t worst_index = -1;
    bool pass = false;
};

// Central differences on the float32 forward path. The probe step is
// step * max(1, |x_i|) per coordinate and the difference is divided by the
// realized float32 step. Relative error per coordinate is
// |analytic - numeric| / max(|analytic|, |numeric|, 5% of the largest
// numeric entry, 1e-8): float32 forward noise is absolute, so near-zero
// coordinates are held to an absolute standard. A failure is a report,
// never an exception.
GradCheckReport grad_check(const std::function<NodeId(Tape&, NodeId)>& scalar_fn,
                           const Tensor& at, double tolerance, double step = 1e-3);

}  // namespace eopt
