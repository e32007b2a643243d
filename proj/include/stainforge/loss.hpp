#pragma once

#include <vector>

#include "stainforge/tensor.hpp"

namespace stainforge::nn {

struct LossResult {
    double value = 0.0;
    Tensor grad; // w.r.t. the first argument
};

// Batch mean of -log softmax(logits)[label]; gradient (softmax - onehot) / N.
LossResult cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels);

// (1/N) sum_i ||pred_i - target_i||^2; gradient 2 (pred - target) / N.
LossResult squared_l2_loss(const Tensor& pred, const Tensor& target);

} // namespace stainforge::nn
