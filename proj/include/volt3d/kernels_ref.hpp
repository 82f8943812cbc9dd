#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "volt3d/layers.hpp"
#include "volt3d/tensor.hpp"

// Serial reference kernels: the textbook loop nests, written without the
// blocking, pointer walking or parallelism of the tuned versions in
// layers.hpp. They exist as oracles for the tests and as the baseline in the
// kernel benchmark; keep them boring.

namespace volt3d::ref {

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Conv3DParams<T>& p) {
    const int N = x.dim(0), X = x.dim(1), Y = x.dim(2), Z = x.dim(3), Ci = x.dim(4);
    const int k = p.kernel, Co = p.weights.dim(4);
    const int A = X - k + 1, B = Y - k + 1, C = Z - k + 1;
    Tensor<T> out({N, A, B, C, Co});
    for (int n = 0; n < N; ++n)
        for (int a = 0; a < A; ++a)
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c)
                    for (int o = 0; o < Co; ++o) {
                        T acc = p.bias[o];
                        for (int i = 0; i < k; ++i)
                            for (int j = 0; j < k; ++j)
                                for (int l = 0; l < k; ++l)
                                    for (int m = 0; m < Ci; ++m)
                                        acc += x.at(n, a + i, b + j, c + l, m) * p.weights.at(i, j, l, m, o);
                        out.at(n, a, b, c, o) = acc;
                    }
    return out;
}

// Scatter form: walk the forward loops once and accumulate into every
// gradient, exactly as the chain rule reads.
template <typename T>
Conv3DBackward<T> conv3d_backward(const Tensor<T>& x, const Conv3DParams<T>& p, const Tensor<T>& grad_out) {
    const int N = x.dim(0), Ci = x.dim(4);
    const int k = p.kernel, Co = p.weights.dim(4);
    const int A = grad_out.dim(1), B = grad_out.dim(2), C = grad_out.dim(3);
    Conv3DBackward<T> g{Tensor<T>(x.shape()), Tensor<T>(p.weights.shape()), Tensor<T>(p.bias.shape())};
    for (int n = 0; n < N; ++n)
        for (int a = 0; a < A; ++a)
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c)
                    for (int o = 0; o < Co; ++o) {
                        const T go = grad_out.at(n, a, b, c, o);
                        g.grad_b[o] += go;
                        for (int i = 0; i < k; ++i)
                            for (int j = 0; j < k; ++j)
                                for (int l = 0; l < k; ++l)
                                    for (int m = 0; m < Ci; ++m) {
                                        g.grad_w.at(i, j, l, m, o) += x.at(n, a + i, b + j, c + l, m) * go;
                                        g.grad_x.at(n, a + i, b + j, c + l, m) += p.weights.at(i, j, l, m, o) * go;
                                    }
                    }
    return g;
}

template <typename T>
std::pair<Tensor<T>, MaxPoolRecord> maxpool3d_forward(const Tensor<T>& x, std::array<int, 3> window = {2, 2, 2}) {
    const int N = x.dim(0), X = x.dim(1), Y = x.dim(2), Z = x.dim(3), C = x.dim(4);
    const int A = X / window[0], B = Y / window[1], D = Z / window[2];
    Tensor<T> out({N, A, B, D, C});
    MaxPoolRecord rec;
    rec.window = window;
    rec.in_shape = x.shape();
    rec.out_shape = out.shape();
    rec.argmax.resize(static_cast<std::size_t>(out.size()));
    for (int n = 0; n < N; ++n)
        for (int a = 0; a < A; ++a)
            for (int b = 0; b < B; ++b)
                for (int d = 0; d < D; ++d)
                    for (int c = 0; c < C; ++c) {
                        std::int64_t best_ix = -1;
                        T best{};
                        for (int i = 0; i < window[0]; ++i)
                            for (int j = 0; j < window[1]; ++j)
                                for (int l = 0; l < window[2]; ++l) {
                                    const std::int64_t ix = x.offset(n, a * window[0] + i, b * window[1] + j,
                                                                     d * window[2] + l, c);
                                    if (best_ix < 0 || x[ix] > best) {
                                        best = x[ix];
                                        best_ix = ix;
                                    }
                                }
                        out.at(n, a, b, d, c) = best;
                        rec.argmax[static_cast<std::size_t>(out.offset(n, a, b, d, c))] = best_ix;
                    }
    return {std::move(out), std::move(rec)};
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const DenseParams<T>& p) {
    const int N = x.dim(0), Fi = x.dim(1), Fo = p.weights.dim(1);
    Tensor<T> out({N, Fo});
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < Fo; ++o) {
            T acc = p.bias[o];
            for (int i = 0; i < Fi; ++i) acc += x.at(n, i) * p.weights.at(i, o);
            out.at(n, o) = acc;
        }
    return out;
}

} // namespace volt3d::ref
