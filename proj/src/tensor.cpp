#include "stainforge/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "stainforge/errors.hpp"

namespace stainforge::nn {

int64_t numel_of(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeMismatch("negative tensor extent");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b)) throw ShapeMismatch(std::string(where) + ": tensor shapes differ");
}

void require_finite(const Tensor& t, const char* where) {
    if (!all_finite(t))
        throw InvalidConfig(std::string(where) + ": tensor contains NaN or Inf");
}

} // namespace stainforge::nn
