#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stainforge::nn {

// Dense row-major tensor of doubles.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
    double& at2(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double at2(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    void fill(double v);
};

int64_t numel_of(const std::vector<int>& shape);
bool all_finite(const Tensor& t);
void require_same_shape(const Tensor& a, const Tensor& b, const char* where);
void require_finite(const Tensor& t, const char* where); // throws ShapeMismatch/InvalidConfig

// A trainable tensor with its gradient buffer.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, std::vector<int> shape)
        : name(std::move(n)), value(shape), grad(std::move(shape)) {}
    void zero_grad() { grad.fill(0.0); }
};

} // namespace stainforge::nn
