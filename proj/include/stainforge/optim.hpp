#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "stainforge/tensor.hpp"

namespace stainforge::nn {

enum class OptAlgo { sgd, adam };

// The three parameter collections of the multi-task network: shared convolutional
// trunk, classifier head, adversarial head.
struct ParamGroups {
    std::vector<Param*> conv;
    std::vector<Param*> cl;
    std::vector<Param*> reg;

    std::vector<Param*> all() const;
};

struct AdamMoments {
    Tensor m;
    Tensor v;
};

struct OptimState {
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    OptAlgo algorithm = OptAlgo::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int64_t step = 0;
    std::map<std::string, AdamMoments> moments; // keyed by param name
};

// One optimizer step. Gradients come from a single combined backward pass in which
// the gradient-reversal layer already folded -lambda into the trunk's adversarial
// gradient. Group learning rates: trunk and classifier use mu, the adversarial head
// uses lambda * mu (its decoupled decay scales the same way). Throws
// NonFiniteGradient on NaN/Inf gradients.
void apply_update(ParamGroups& groups, OptimState& opt, double lambda);

} // namespace stainforge::nn
