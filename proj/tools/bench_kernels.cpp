// Times the OpenMP kernels against the serial reference loops on
// production-sized tensors. Numbers vary with the machine; the point is the
// shape of the comparison, not absolute throughput.

#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "volt3d/gradcheck.hpp"
#include "volt3d/kernels_ref.hpp"
#include "volt3d/layers.hpp"

using namespace volt3d;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm-up, and first-touch page allocation
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

void row(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-18s %10.2f %10.2f %9.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

} // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-18s %10s %10s %10s\n", "kernel", "serial_ms", "openmp_ms", "speedup");

    {
        auto x = random_uniform({2, 24, 24, 12, 8}, 1);
        Conv3DParams<double> p{random_uniform({3, 3, 3, 8, 16}, 2), random_uniform({16}, 3), 3};
        row("conv3d_forward", time_ms([&] { ref::conv3d_forward(x, p); }, 3),
            time_ms([&] { conv3d_forward(x, p); }, 3));

        auto gout = random_uniform({2, 22, 22, 10, 16}, 4);
        row("conv3d_backward", time_ms([&] { ref::conv3d_backward(x, p, gout); }, 3),
            time_ms([&] { conv3d_backward(x, p, gout); }, 3));
    }
    {
        auto x = random_uniform({4, 64, 64, 32, 8}, 5);
        row("maxpool3d", time_ms([&] { ref::maxpool3d_forward(x); }, 5),
            time_ms([&] { maxpool3d_forward(x); }, 5));
    }
    {
        auto x = random_uniform({64, 512}, 6);
        DenseParams<double> p{random_uniform({512, 512}, 7), random_uniform({512}, 8)};
        row("dense", time_ms([&] { ref::dense_forward(x, p); }, 20),
            time_ms([&] { dense_forward(x, p); }, 20));
    }
    return 0;
}
