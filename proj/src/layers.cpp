#include "stainforge/layers.hpp"

#include <algorithm>
#include <cmath>

#include "stainforge/errors.hpp"

namespace stainforge::nn {

Conv2d::Conv2d(std::string name, int in_c, int out_c, int k, int stride)
    : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride),
      w_(name + ".w", {out_c, in_c, k, k}), b_(name + ".b", {out_c}) {
    if (in_c < 1 || out_c < 1 || k < 1 || stride < 1)
        throw InvalidConfig("Conv2d: bad dimensions");
}

void Conv2d::init_he(Rng rng) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in_c_) * k_ * k_));
    for (auto& v : w_.value.data) v = rng.normal(0.0, stddev);
    b_.value.fill(0.0);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.ndim() != 4 || x.dim(1) != in_c_) throw ShapeMismatch("Conv2d: expected [N,C,H,W]");
    if (x.dim(2) < k_ || x.dim(3) < k_) throw ShapeMismatch("Conv2d: input smaller than kernel");
    cached_in_ = x;
    const Conv2dDims d{x.dim(0), in_c_, x.dim(2), x.dim(3), out_c_, k_, stride_};
    Tensor y({d.n, out_c_, d.out_h(), d.out_w()});
    kernels::conv2d_forward(x.data.data(), w_.value.data.data(), b_.value.data.data(),
                            y.data.data(), d);
    return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    const Tensor& x = cached_in_;
    const Conv2dDims d{x.dim(0), in_c_, x.dim(2), x.dim(3), out_c_, k_, stride_};
    if (grad_out.ndim() != 4 || grad_out.dim(1) != out_c_ || grad_out.dim(2) != d.out_h() ||
        grad_out.dim(3) != d.out_w())
        throw ShapeMismatch("Conv2d backward: gradient shape mismatch");
    kernels::conv2d_backward_params(x.data.data(), grad_out.data.data(), w_.grad.data.data(),
                                    b_.grad.data.data(), d);
    Tensor gx(x.shape);
    kernels::conv2d_backward_input(grad_out.data.data(), w_.value.data.data(), gx.data.data(), d);
    return gx;
}

Dense::Dense(std::string name, int in_dim, int out_dim)
    : in_dim_(in_dim), out_dim_(out_dim), w_(name + ".w", {out_dim, in_dim}),
      b_(name + ".b", {out_dim}) {
    if (in_dim < 1 || out_dim < 1) throw InvalidConfig("Dense: bad dimensions");
}

void Dense::init_he(Rng rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_dim_));
    for (auto& v : w_.value.data) v = rng.normal(0.0, stddev);
    b_.value.fill(0.0);
}

Tensor Dense::forward(const Tensor& x) {
    if (x.ndim() != 2 || x.dim(1) != in_dim_) throw ShapeMismatch("Dense: expected [N, in_dim]");
    cached_in_ = x;
    Tensor y({x.dim(0), out_dim_});
    kernels::dense_forward(x.data.data(), w_.value.data.data(), b_.value.data.data(),
                           y.data.data(), x.dim(0), in_dim_, out_dim_);
    return y;
}

Tensor Dense::backward(const Tensor& grad_out) {
    const Tensor& x = cached_in_;
    if (grad_out.ndim() != 2 || grad_out.dim(0) != x.dim(0) || grad_out.dim(1) != out_dim_)
        throw ShapeMismatch("Dense backward: gradient shape mismatch");
    kernels::dense_backward_params(x.data.data(), grad_out.data.data(), w_.grad.data.data(),
                                   b_.grad.data.data(), x.dim(0), in_dim_, out_dim_);
    Tensor gx(x.shape);
    kernels::dense_backward_input(grad_out.data.data(), w_.value.data.data(), gx.data.data(),
                                  x.dim(0), in_dim_, out_dim_);
    return gx;
}

Tensor Relu::forward(const Tensor& x) {
    cached_in_ = x;
    Tensor y(x.shape);
    const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    return y;
}

Tensor Relu::backward(const Tensor& grad_out) {
    require_same_shape(grad_out, cached_in_, "Relu backward");
    Tensor gx(grad_out.shape);
    const int64_t n = grad_out.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i)
        gx.data[i] = cached_in_.data[i] > 0.0 ? grad_out.data[i] : 0.0;
    return gx;
}

Tensor Sigmoid::forward(const Tensor& x) {
    Tensor y(x.shape);
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) y.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
    cached_out_ = y;
    return y;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
    require_same_shape(grad_out, cached_out_, "Sigmoid backward");
    Tensor gx(grad_out.shape);
    const int64_t n = grad_out.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double s = cached_out_.data[i];
        gx.data[i] = grad_out.data[i] * s * (1.0 - s);
    }
    return gx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) {
    if (x.ndim() != 4) throw ShapeMismatch("GlobalAvgPool: expected [N,C,H,W]");
    cached_shape_ = x.shape;
    const int n = x.dim(0), c = x.dim(1);
    const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tensor y({n, c});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const double* p = x.data.data() + (static_cast<int64_t>(i) * c + j) * plane;
            double acc = 0.0;
            for (int64_t t = 0; t < plane; ++t) acc += p[t];
            y.at2(i, j) = acc / static_cast<double>(plane);
        }
    return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
    const int n = cached_shape_[0], c = cached_shape_[1];
    if (grad_out.ndim() != 2 || grad_out.dim(0) != n || grad_out.dim(1) != c)
        throw ShapeMismatch("GlobalAvgPool backward: gradient shape mismatch");
    const int64_t plane = static_cast<int64_t>(cached_shape_[2]) * cached_shape_[3];
    Tensor gx(cached_shape_);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const double g = grad_out.at2(i, j) / static_cast<double>(plane);
            double* p = gx.data.data() + (static_cast<int64_t>(i) * c + j) * plane;
            for (int64_t t = 0; t < plane; ++t) p[t] = g;
        }
    return gx;
}

Tensor GradReverse::backward(const Tensor& grad_out) const {
    Tensor gx(grad_out.shape);
    const int64_t n = grad_out.numel();
    for (int64_t i = 0; i < n; ++i) gx.data[i] = -lambda_ * grad_out.data[i];
    return gx;
}

Tensor softmax(const Tensor& logits) {
    if (logits.ndim() != 2) throw ShapeMismatch("softmax: expected [N, K]");
    const int n = logits.dim(0), k = logits.dim(1);
    Tensor out({n, k});
    for (int i = 0; i < n; ++i) {
        double mx = logits.at2(i, 0);
        for (int j = 1; j < k; ++j) mx = std::max(mx, logits.at2(i, j));
        double sum = 0.0;
        for (int j = 0; j < k; ++j) {
            const double e = std::exp(logits.at2(i, j) - mx);
            out.at2(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < k; ++j) out.at2(i, j) /= sum;
    }
    return out;
}

} // namespace stainforge::nn
