#include "stainforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace stainforge::nn {

double finite_diff_check(const std::function<double()>& loss_fn,
                         const std::function<void()>& backward_fn,
                         const std::vector<Param*>& params, double step) {
    backward_fn();
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const Param* p : params) analytic.push_back(p->grad);

    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Param& p = *params[pi];
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            const double orig = p.value.data[i];
            p.value.data[i] = orig + step;
            const double up = loss_fn();
            p.value.data[i] = orig - step;
            const double down = loss_fn();
            p.value.data[i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[pi].data[i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace stainforge::nn
