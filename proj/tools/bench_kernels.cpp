// Benchmark of the OpenMP kernels against their serial reference implementations.
// Also cross-checks that both produce bitwise-identical outputs.

#include <algorithm>
#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <omp.h>

#include "stainforge/kernels.hpp"
#include "stainforge/rng.hpp"

using namespace stainforge;

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int repeats) {
    const auto t0 = Clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const std::string& name, double serial_ms, double omp_ms, bool identical) {
    std::cout << std::left << std::setw(26) << name << std::right << std::fixed
              << std::setprecision(3) << std::setw(12) << serial_ms << std::setw(12) << omp_ms
              << std::setw(10) << std::setprecision(2) << serial_ms / omp_ms << std::setw(12)
              << (identical ? "bitwise" : "DIFFER") << "\n";
}

} // namespace

int main(int argc, char** argv) {
    const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
    const int repeats = quick ? 2 : 10;

    Rng rng(42);
    std::cout << "threads: " << omp_get_max_threads() << "\n";
    std::cout << std::left << std::setw(26) << "kernel" << std::right << std::setw(12)
              << "serial ms" << std::setw(12) << "omp ms" << std::setw(10) << "speedup"
              << std::setw(12) << "outputs" << "\n";

    bool all_identical = true;

    {
        const Conv2dDims d{quick ? 2 : 8, 16, quick ? 32 : 64, quick ? 32 : 64, 32, 3, 2};
        const auto x = random_vec(static_cast<size_t>(d.n) * d.in_c * d.in_h * d.in_w, rng);
        const auto w = random_vec(static_cast<size_t>(d.out_c) * d.in_c * d.k * d.k, rng);
        const auto b = random_vec(static_cast<size_t>(d.out_c), rng);
        const size_t ysz = static_cast<size_t>(d.n) * d.out_c * d.out_h() * d.out_w();
        std::vector<double> y_ref(ysz), y_omp(ysz);

        const double t_ref = time_ms(
            [&] { ref::conv2d_forward(x.data(), w.data(), b.data(), y_ref.data(), d); }, repeats);
        const double t_omp = time_ms(
            [&] { kernels::conv2d_forward(x.data(), w.data(), b.data(), y_omp.data(), d); },
            repeats);
        const bool same = bitwise_equal(y_ref, y_omp);
        all_identical &= same;
        report("conv2d_forward", t_ref, t_omp, same);

        const auto gy = random_vec(ysz, rng);
        std::vector<double> gx_ref(x.size()), gx_omp(x.size());
        const double t_ref2 = time_ms(
            [&] { ref::conv2d_backward_input(gy.data(), w.data(), gx_ref.data(), d); }, repeats);
        const double t_omp2 = time_ms(
            [&] { kernels::conv2d_backward_input(gy.data(), w.data(), gx_omp.data(), d); },
            repeats);
        const bool same2 = bitwise_equal(gx_ref, gx_omp);
        all_identical &= same2;
        report("conv2d_backward_input", t_ref2, t_omp2, same2);

        std::vector<double> gw_ref(w.size(), 0.0), gw_omp(w.size(), 0.0);
        std::vector<double> gb_ref(b.size(), 0.0), gb_omp(b.size(), 0.0);
        const double t_ref3 = time_ms(
            [&] {
                std::fill(gw_ref.begin(), gw_ref.end(), 0.0);
                std::fill(gb_ref.begin(), gb_ref.end(), 0.0);
                ref::conv2d_backward_params(x.data(), gy.data(), gw_ref.data(), gb_ref.data(), d);
            },
            repeats);
        const double t_omp3 = time_ms(
            [&] {
                std::fill(gw_omp.begin(), gw_omp.end(), 0.0);
                std::fill(gb_omp.begin(), gb_omp.end(), 0.0);
                kernels::conv2d_backward_params(x.data(), gy.data(), gw_omp.data(),
                                                gb_omp.data(), d);
            },
            repeats);
        const bool same3 = bitwise_equal(gw_ref, gw_omp) && bitwise_equal(gb_ref, gb_omp);
        all_identical &= same3;
        report("conv2d_backward_params", t_ref3, t_omp3, same3);
    }

    {
        const int n = quick ? 32 : 256, in_dim = 512, out_dim = 256;
        const auto x = random_vec(static_cast<size_t>(n) * in_dim, rng);
        const auto w = random_vec(static_cast<size_t>(out_dim) * in_dim, rng);
        const auto b = random_vec(static_cast<size_t>(out_dim), rng);
        std::vector<double> y_ref(static_cast<size_t>(n) * out_dim),
            y_omp(static_cast<size_t>(n) * out_dim);
        const double t_ref = time_ms(
            [&] { ref::dense_forward(x.data(), w.data(), b.data(), y_ref.data(), n, in_dim, out_dim); },
            repeats);
        const double t_omp = time_ms(
            [&] {
                kernels::dense_forward(x.data(), w.data(), b.data(), y_omp.data(), n, in_dim,
                                       out_dim);
            },
            repeats);
        const bool same = bitwise_equal(y_ref, y_omp);
        all_identical &= same;
        report("dense_forward", t_ref, t_omp, same);
    }

    if (!all_identical) {
        std::cerr << "FAIL: OpenMP kernels diverged from the serial reference\n";
        return 1;
    }
    return 0;
}
