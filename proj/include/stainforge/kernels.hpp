#pragma once

#include <cstdint>

namespace stainforge {

struct Conv2dDims {
    int n = 0;     // batch
    int in_c = 0;  // input channels
    int in_h = 0;
    int in_w = 0;
    int out_c = 0; // output channels
    int k = 0;     // square kernel
    int stride = 1;

    int out_h() const { return (in_h - k) / stride + 1; }
    int out_w() const { return (in_w - k) / stride + 1; }
};

// OpenMP kernels. Each output element is accumulated serially in a fixed order
// (in_c, ky, kx for conv; input index for dense), so results are bitwise identical
// to the serial reference for any thread count.
namespace kernels {

void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d);
// Accumulates into gw/gb.
void conv2d_backward_params(const double* x, const double* gy, double* gw, double* gb,
                            const Conv2dDims& d);

void dense_forward(const double* x, const double* w, const double* b, double* y, int n,
                   int in_dim, int out_dim);
void dense_backward_input(const double* gy, const double* w, double* gx, int n, int in_dim,
                          int out_dim);
// Accumulates into gw/gb.
void dense_backward_params(const double* x, const double* gy, double* gw, double* gb, int n,
                           int in_dim, int out_dim);

} // namespace kernels

// Serial reference implementations, kept for the kernel equivalence tests and the
// benchmark tool. Same accumulation order per output element as the kernels above.
namespace ref {

void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d);
void conv2d_backward_params(const double* x, const double* gy, double* gw, double* gb,
                            const Conv2dDims& d);

void dense_forward(const double* x, const double* w, const double* b, double* y, int n,
                   int in_dim, int out_dim);
void dense_backward_input(const double* gy, const double* w, double* gx, int n, int in_dim,
                          int out_dim);
void dense_backward_params(const double* x, const double* gy, double* gw, double* gb, int n,
                           int in_dim, int out_dim);

} // namespace ref

} // namespace stainforge
