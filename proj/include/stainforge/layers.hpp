#pragma once

#include <vector>

#include "stainforge/kernels.hpp"
#include "stainforge/rng.hpp"
#include "stainforge/tensor.hpp"

namespace stainforge::nn {

// Layers cache what their backward pass needs; backward accumulates parameter
// gradients and returns the gradient w.r.t. the layer input.

class Conv2d {
public:
    Conv2d(std::string name, int in_c, int out_c, int k, int stride);

    void init_he(Rng rng);
    Tensor forward(const Tensor& x); // x: [N, C, H, W]
    Tensor backward(const Tensor& grad_out);
    std::vector<Param*> params() { return {&w_, &b_}; }

    int in_channels() const { return in_c_; }
    int out_channels() const { return out_c_; }

private:
    int in_c_, out_c_, k_, stride_;
    Param w_; // [out_c, in_c, k, k]
    Param b_; // [out_c]
    Tensor cached_in_;
};

class Dense {
public:
    Dense(std::string name, int in_dim, int out_dim);

    void init_he(Rng rng);
    Tensor forward(const Tensor& x); // x: [N, in_dim]
    Tensor backward(const Tensor& grad_out);
    std::vector<Param*> params() { return {&w_, &b_}; }

    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }

private:
    int in_dim_, out_dim_;
    Param w_; // [out_dim, in_dim]
    Param b_; // [out_dim]
    Tensor cached_in_;
};

class Relu {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

private:
    Tensor cached_in_;
};

class Sigmoid {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

private:
    Tensor cached_out_;
};

// [N, C, H, W] -> [N, C], mean over the spatial extent.
class GlobalAvgPool {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

private:
    std::vector<int> cached_shape_;
};

// Identity in the forward pass; multiplies the upstream gradient by -lambda in the
// backward pass.
class GradReverse {
public:
    explicit GradReverse(double lambda = 1.0) : lambda_(lambda) {}

    double lambda() const { return lambda_; }
    void set_lambda(double l) { lambda_ = l; }
    Tensor forward(const Tensor& x) { return x; }
    Tensor backward(const Tensor& grad_out) const;

private:
    double lambda_;
};

// Row-wise stable softmax of [N, K] logits.
Tensor softmax(const Tensor& logits);

} // namespace stainforge::nn
