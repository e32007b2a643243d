#include "stainforge/loss.hpp"

#include <cmath>

#include "stainforge/errors.hpp"
#include "stainforge/layers.hpp"

namespace stainforge::nn {

LossResult cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2) throw ShapeMismatch("cross_entropy_loss: expected [N, K] logits");
    const int n = logits.dim(0), k = logits.dim(1);
    if (k < 2) throw ShapeMismatch("cross_entropy_loss: K must be >= 2");
    if (static_cast<int>(labels.size()) != n)
        throw ShapeMismatch("cross_entropy_loss: labels length != batch size");
    for (int y : labels)
        if (y < 0 || y >= k) throw ShapeMismatch("cross_entropy_loss: label out of range");

    LossResult res;
    res.grad = softmax(logits);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double p = res.grad.at2(i, labels[static_cast<size_t>(i)]);
        loss -= std::log(std::max(p, 1e-300));
    }
    res.value = loss / n;
    for (int i = 0; i < n; ++i) {
        res.grad.at2(i, labels[static_cast<size_t>(i)]) -= 1.0;
        for (int j = 0; j < k; ++j) res.grad.at2(i, j) /= n;
    }
    return res;
}

LossResult squared_l2_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "squared_l2_loss");
    if (pred.ndim() != 2) throw ShapeMismatch("squared_l2_loss: expected [N, D]");
    const int n = pred.dim(0);
    LossResult res;
    res.grad = Tensor(pred.shape);
    double loss = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const double diff = pred.data[i] - target.data[i];
        loss += diff * diff;
        res.grad.data[i] = 2.0 * diff / n;
    }
    res.value = loss / n;
    return res;
}

} // namespace stainforge::nn
