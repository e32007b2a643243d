#pragma once

#include <functional>
#include <vector>

#include "stainforge/tensor.hpp"

namespace stainforge::nn {

// Central-difference verification of analytic gradients. `loss_fn` evaluates the
// scalar loss at the current parameter values; `backward_fn` zeroes the gradients
// and runs the analytic backward pass. Returns the max over all coordinates of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const std::function<double()>& loss_fn,
                         const std::function<void()>& backward_fn,
                         const std::vector<Param*>& params, double step = 1e-4);

} // namespace stainforge::nn
