#include "stainforge/optim.hpp"

#include <cmath>

#include "stainforge/errors.hpp"

namespace stainforge::nn {

std::vector<Param*> ParamGroups::all() const {
    std::vector<Param*> out;
    out.reserve(conv.size() + cl.size() + reg.size());
    out.insert(out.end(), conv.begin(), conv.end());
    out.insert(out.end(), cl.begin(), cl.end());
    out.insert(out.end(), reg.begin(), reg.end());
    return out;
}

namespace {

void step_param(Param& p, OptimState& opt, double lr) {
    if (!all_finite(p.grad)) throw NonFiniteGradient("non-finite gradient in " + p.name);
    const int64_t n = p.value.numel();
    if (opt.algorithm == OptAlgo::sgd) {
        for (int64_t i = 0; i < n; ++i)
            p.value.data[i] -= lr * (p.grad.data[i] + opt.weight_decay * p.value.data[i]);
        return;
    }
    auto it = opt.moments.find(p.name);
    if (it == opt.moments.end()) {
        it = opt.moments.emplace(p.name, AdamMoments{Tensor(p.value.shape), Tensor(p.value.shape)})
                 .first;
    }
    AdamMoments& mom = it->second;
    const double b1t = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double b2t = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (int64_t i = 0; i < n; ++i) {
        const double g = p.grad.data[i];
        mom.m.data[i] = opt.beta1 * mom.m.data[i] + (1.0 - opt.beta1) * g;
        mom.v.data[i] = opt.beta2 * mom.v.data[i] + (1.0 - opt.beta2) * g * g;
        const double mhat = mom.m.data[i] / b1t;
        const double vhat = mom.v.data[i] / b2t;
        p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + opt.epsilon);
        p.value.data[i] -= lr * opt.weight_decay * p.value.data[i];
    }
}

} // namespace

void apply_update(ParamGroups& groups, OptimState& opt, double lambda) {
    if (lambda < 0.0) throw InvalidConfig("apply_update: lambda must be >= 0");
    opt.step += 1;
    for (Param* p : groups.conv) step_param(*p, opt, opt.learning_rate);
    for (Param* p : groups.cl) step_param(*p, opt, opt.learning_rate);
    if (lambda > 0.0) {
        for (Param* p : groups.reg) step_param(*p, opt, lambda * opt.learning_rate);
    } else {
        // lambda = 0 freezes the adversarial head (its effective rate is lambda * mu),
        // but its gradients must still be finite.
        for (Param* p : groups.reg)
            if (!all_finite(p->grad))
                throw NonFiniteGradient("non-finite gradient in " + p->name);
    }
}

} // namespace stainforge::nn
