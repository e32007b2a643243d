#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "stainforge/kernels.hpp"
#include "stainforge/rng.hpp"

using namespace stainforge;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

TEST_CASE("conv2d all-ones 3x3 kernel on constant input gives the window sum") {
    const Conv2dDims d{1, 1, 5, 5, 1, 3, 1};
    std::vector<double> x(25, 1.0), w(9, 1.0), b(1, 0.0);
    std::vector<double> y(static_cast<size_t>(d.out_h()) * d.out_w());
    kernels::conv2d_forward(x.data(), w.data(), b.data(), y.data(), d);
    CHECK(d.out_h() == 3);
    CHECK(d.out_w() == 3);
    for (double v : y) CHECK(v == doctest::Approx(9.0));
}

TEST_CASE("conv2d stride-2 output geometry") {
    const Conv2dDims d{1, 1, 7, 9, 1, 3, 2};
    CHECK(d.out_h() == 3);
    CHECK(d.out_w() == 4);
}

TEST_CASE("omp conv kernels match the serial reference bitwise") {
    Rng rng(123);
    const Conv2dDims configs[] = {
        {2, 3, 12, 12, 4, 3, 1},
        {3, 2, 11, 9, 5, 3, 2},
        {1, 4, 8, 8, 2, 5, 1},
        {2, 1, 16, 16, 8, 3, 2},
    };
    for (const auto& d : configs) {
        const auto x = random_vec(static_cast<size_t>(d.n) * d.in_c * d.in_h * d.in_w, rng);
        const auto w = random_vec(static_cast<size_t>(d.out_c) * d.in_c * d.k * d.k, rng);
        const auto b = random_vec(static_cast<size_t>(d.out_c), rng);
        const size_t ysz = static_cast<size_t>(d.n) * d.out_c * d.out_h() * d.out_w();

        std::vector<double> y_ref(ysz), y_omp(ysz);
        ref::conv2d_forward(x.data(), w.data(), b.data(), y_ref.data(), d);
        kernels::conv2d_forward(x.data(), w.data(), b.data(), y_omp.data(), d);
        CHECK(bitwise_equal(y_ref, y_omp));

        const auto gy = random_vec(ysz, rng);
        std::vector<double> gx_ref(x.size()), gx_omp(x.size());
        ref::conv2d_backward_input(gy.data(), w.data(), gx_ref.data(), d);
        kernels::conv2d_backward_input(gy.data(), w.data(), gx_omp.data(), d);
        CHECK(bitwise_equal(gx_ref, gx_omp));

        std::vector<double> gw_ref(w.size(), 0.0), gw_omp(w.size(), 0.0);
        std::vector<double> gb_ref(b.size(), 0.0), gb_omp(b.size(), 0.0);
        ref::conv2d_backward_params(x.data(), gy.data(), gw_ref.data(), gb_ref.data(), d);
        kernels::conv2d_backward_params(x.data(), gy.data(), gw_omp.data(), gb_omp.data(), d);
        CHECK(bitwise_equal(gw_ref, gw_omp));
        CHECK(bitwise_equal(gb_ref, gb_omp));
    }
}

TEST_CASE("omp dense kernels match the serial reference bitwise") {
    Rng rng(321);
    const int n = 7, in_dim = 13, out_dim = 5;
    const auto x = random_vec(static_cast<size_t>(n) * in_dim, rng);
    const auto w = random_vec(static_cast<size_t>(out_dim) * in_dim, rng);
    const auto b = random_vec(static_cast<size_t>(out_dim), rng);

    std::vector<double> y_ref(static_cast<size_t>(n) * out_dim), y_omp(y_ref.size());
    ref::dense_forward(x.data(), w.data(), b.data(), y_ref.data(), n, in_dim, out_dim);
    kernels::dense_forward(x.data(), w.data(), b.data(), y_omp.data(), n, in_dim, out_dim);
    CHECK(bitwise_equal(y_ref, y_omp));

    const auto gy = random_vec(y_ref.size(), rng);
    std::vector<double> gx_ref(x.size()), gx_omp(x.size());
    ref::dense_backward_input(gy.data(), w.data(), gx_ref.data(), n, in_dim, out_dim);
    kernels::dense_backward_input(gy.data(), w.data(), gx_omp.data(), n, in_dim, out_dim);
    CHECK(bitwise_equal(gx_ref, gx_omp));

    std::vector<double> gw_ref(w.size(), 0.0), gw_omp(w.size(), 0.0);
    std::vector<double> gb_ref(b.size(), 0.0), gb_omp(b.size(), 0.0);
    ref::dense_backward_params(x.data(), gy.data(), gw_ref.data(), gb_ref.data(), n, in_dim,
                               out_dim);
    kernels::dense_backward_params(x.data(), gy.data(), gw_omp.data(), gb_omp.data(), n, in_dim,
                                   out_dim);
    CHECK(bitwise_equal(gw_ref, gw_omp));
    CHECK(bitwise_equal(gb_ref, gb_omp));
}

TEST_CASE("dense forward with identity weights reproduces the input") {
    const int n = 3, dim = 4;
    Rng rng(9);
    const auto x = random_vec(static_cast<size_t>(n) * dim, rng);
    std::vector<double> w(static_cast<size_t>(dim) * dim, 0.0), b(dim, 0.0);
    for (int i = 0; i < dim; ++i) w[static_cast<size_t>(i) * dim + i] = 1.0;
    std::vector<double> y(x.size());
    kernels::dense_forward(x.data(), w.data(), b.data(), y.data(), n, dim, dim);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));
}
