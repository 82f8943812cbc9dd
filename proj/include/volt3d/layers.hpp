#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "volt3d/errors.hpp"
#include "volt3d/rng.hpp"
#include "volt3d/tensor.hpp"

// Layer forward/backward kernels. All tensors use the (N, X, Y, Z, C) layout
// with the channel axis fastest. Parallel loops only ever partition disjoint
// output elements and keep every accumulation order fixed, so results are
// bit-identical for any thread count.

namespace volt3d {

enum class LayerMode { train, infer };

// ---------------------------------------------------------------------------
// Conv3D, valid padding, stride 1, cubic kernel.

template <typename T>
struct Conv3DParams {
    Tensor<T> weights; // (k, k, k, C_in, C_out)
    Tensor<T> bias;    // (C_out)
    int kernel = 3;
};

template <typename T>
struct Conv3DBackward {
    Tensor<T> grad_x, grad_w, grad_b;
};

template <typename T>
void check_conv_shapes(const Tensor<T>& x, const Conv3DParams<T>& p) {
    if (x.rank() != 5) throw ShapeError("ShapeMismatch: conv3d expects a rank-5 input");
    if (p.weights.rank() != 5 || p.bias.rank() != 1)
        throw ShapeError("ShapeMismatch: conv3d weights must be rank 5, bias rank 1");
    const int k = p.kernel;
    if (k < 1) throw ShapeError("ShapeMismatch: conv3d kernel must be >= 1");
    if (p.weights.dim(0) != k || p.weights.dim(1) != k || p.weights.dim(2) != k)
        throw ShapeError("ShapeMismatch: conv3d weight extents disagree with kernel size");
    if (p.weights.dim(3) != x.dim(4))
        throw ShapeError("ShapeMismatch: conv3d input channels disagree with weights");
    if (p.weights.dim(4) != p.bias.dim(0))
        throw ShapeError("ShapeMismatch: conv3d bias length disagrees with output channels");
    for (int a = 1; a <= 3; ++a)
        if (x.dim(a) < k) throw ShapeError("ShapeMismatch: conv3d spatial extent below kernel size");
}

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Conv3DParams<T>& p) {
    check_conv_shapes(x, p);
    const int N = x.dim(0), X = x.dim(1), Y = x.dim(2), Z = x.dim(3), Ci = x.dim(4);
    const int k = p.kernel, Co = p.weights.dim(4);
    const int A = X - k + 1, B = Y - k + 1, C = Z - k + 1;
    Tensor<T> out({N, A, B, C, Co});

    const T* xd = x.data();
    const T* wd = p.weights.data();
    const T* bd = p.bias.data();
    T* od = out.data();

#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n)
        for (int a = 0; a < A; ++a) {
            std::vector<T> acc(static_cast<std::size_t>(Co));
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    for (int o = 0; o < Co; ++o) acc[static_cast<std::size_t>(o)] = bd[o];
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j)
                            for (int l = 0; l < k; ++l) {
                                const T* xrow = xd + ((((std::int64_t(n) * X + (a + i)) * Y + (b + j)) * Z + (c + l)) * Ci);
                                const T* wrow = wd + (((std::int64_t(i) * k + j) * k + l) * Ci) * Co;
                                for (int m = 0; m < Ci; ++m) {
                                    const T xv = xrow[m];
                                    const T* wv = wrow + std::int64_t(m) * Co;
                                    for (int o = 0; o < Co; ++o) acc[static_cast<std::size_t>(o)] += xv * wv[o];
                                }
                            }
                    T* orow = od + ((((std::int64_t(n) * A + a) * B + b) * C + c) * Co);
                    for (int o = 0; o < Co; ++o) orow[o] = acc[static_cast<std::size_t>(o)];
                }
        }
    return out;
}

template <typename T>
Conv3DBackward<T> conv3d_backward(const Tensor<T>& x, const Conv3DParams<T>& p, const Tensor<T>& grad_out) {
    check_conv_shapes(x, p);
    const int N = x.dim(0), X = x.dim(1), Y = x.dim(2), Z = x.dim(3), Ci = x.dim(4);
    const int k = p.kernel, Co = p.weights.dim(4);
    const int A = X - k + 1, B = Y - k + 1, C = Z - k + 1;
    if (grad_out.shape() != std::vector<int>{N, A, B, C, Co})
        throw ShapeError("ShapeMismatch: conv3d_backward grad_out shape");

    Conv3DBackward<T> g{Tensor<T>(x.shape()), Tensor<T>(p.weights.shape()), Tensor<T>(p.bias.shape())};
    const T* xd = x.data();
    const T* wd = p.weights.data();
    const T* gd = grad_out.data();

    // grad_x as a gather: every input position sums the output gradients that
    // touched it, so threads never share a write target.
    T* gx = g.grad_x.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n)
        for (int px = 0; px < X; ++px) {
            std::vector<T> acc(static_cast<std::size_t>(Ci));
            for (int py = 0; py < Y; ++py)
                for (int pz = 0; pz < Z; ++pz) {
                    for (T& v : acc) v = T(0);
                    for (int i = 0; i < k; ++i) {
                        const int a = px - i;
                        if (a < 0 || a >= A) continue;
                        for (int j = 0; j < k; ++j) {
                            const int b = py - j;
                            if (b < 0 || b >= B) continue;
                            for (int l = 0; l < k; ++l) {
                                const int c = pz - l;
                                if (c < 0 || c >= C) continue;
                                const T* grow = gd + ((((std::int64_t(n) * A + a) * B + b) * C + c) * Co);
                                const T* wrow = wd + (((std::int64_t(i) * k + j) * k + l) * Ci) * Co;
                                for (int m = 0; m < Ci; ++m) {
                                    T s = T(0);
                                    const T* wv = wrow + std::int64_t(m) * Co;
                                    for (int o = 0; o < Co; ++o) s += wv[o] * grow[o];
                                    acc[static_cast<std::size_t>(m)] += s;
                                }
                            }
                        }
                    }
                    T* row = gx + ((((std::int64_t(n) * X + px) * Y + py) * Z + pz) * Ci);
                    for (int m = 0; m < Ci; ++m) row[m] = acc[static_cast<std::size_t>(m)];
                }
        }

    // grad_w: each (i,j,l) kernel slice is an independent output region.
    T* gw = g.grad_w.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            for (int l = 0; l < k; ++l) {
                T* wslice = gw + (((std::int64_t(i) * k + j) * k + l) * Ci) * Co;
                for (int n = 0; n < N; ++n)
                    for (int a = 0; a < A; ++a)
                        for (int b = 0; b < B; ++b)
                            for (int c = 0; c < C; ++c) {
                                const T* xrow = xd + ((((std::int64_t(n) * X + (a + i)) * Y + (b + j)) * Z + (c + l)) * Ci);
                                const T* grow = gd + ((((std::int64_t(n) * A + a) * B + b) * C + c) * Co);
                                for (int m = 0; m < Ci; ++m) {
                                    const T xv = xrow[m];
                                    T* wv = wslice + std::int64_t(m) * Co;
                                    for (int o = 0; o < Co; ++o) wv[o] += xv * grow[o];
                                }
                            }
            }

    T* gb = g.grad_b.data();
#pragma omp parallel for schedule(static)
    for (int o = 0; o < Co; ++o) {
        T s = T(0);
        const std::int64_t count = std::int64_t(N) * A * B * C;
        for (std::int64_t r = 0; r < count; ++r) s += gd[r * Co + o];
        gb[o] = s;
    }
    return g;
}

// ---------------------------------------------------------------------------
// MaxPool3D, non-overlapping windows, floor semantics. The model passes a
// per-axis window so degenerate axes (extent 1) can pass through unpooled;
// the plain overload is the fixed 2x2x2 pool.

struct MaxPoolRecord {
    std::array<int, 3> window{2, 2, 2};
    std::vector<int> in_shape, out_shape;
    std::vector<std::int64_t> argmax; // flat input index per output element
};

template <typename T>
std::pair<Tensor<T>, MaxPoolRecord> maxpool3d_forward(const Tensor<T>& x, std::array<int, 3> window) {
    if (x.rank() != 5) throw ShapeError("ShapeMismatch: maxpool3d expects a rank-5 input");
    for (int a = 0; a < 3; ++a) {
        if (window[a] < 1) throw ShapeError("ShapeMismatch: pool window must be >= 1");
        if (x.dim(a + 1) < window[a])
            throw ShapeError("SpatialTooSmall: extent " + std::to_string(x.dim(a + 1)) +
                             " below pool window " + std::to_string(window[a]));
    }
    const int N = x.dim(0), X = x.dim(1), Y = x.dim(2), Z = x.dim(3), C = x.dim(4);
    const int A = X / window[0], B = Y / window[1], D = Z / window[2];

    Tensor<T> out({N, A, B, D, C});
    MaxPoolRecord rec;
    rec.window = window;
    rec.in_shape = x.shape();
    rec.out_shape = out.shape();
    rec.argmax.resize(static_cast<std::size_t>(out.size()));

    const T* xd = x.data();
    T* od = out.data();
    std::int64_t* am = rec.argmax.data();

#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n)
        for (int a = 0; a < A; ++a)
            for (int b = 0; b < B; ++b)
                for (int d = 0; d < D; ++d)
                    for (int c = 0; c < C; ++c) {
                        T best{};
                        std::int64_t best_ix = -1;
                        for (int i = 0; i < window[0]; ++i)
                            for (int j = 0; j < window[1]; ++j)
                                for (int l = 0; l < window[2]; ++l) {
                                    const std::int64_t ix =
                                        ((((std::int64_t(n) * X + (a * window[0] + i)) * Y + (b * window[1] + j)) * Z +
                                          (d * window[2] + l)) *
                                         C) +
                                        c;
                                    const T v = xd[ix];
                                    if (best_ix < 0 || v > best) { // first occurrence wins ties
                                        best = v;
                                        best_ix = ix;
                                    }
                                }
                        const std::int64_t oix = ((((std::int64_t(n) * A + a) * B + b) * D + d) * C) + c;
                        od[oix] = best;
                        am[oix] = best_ix;
                    }
    return {std::move(out), std::move(rec)};
}

template <typename T>
std::pair<Tensor<T>, MaxPoolRecord> maxpool3d_forward(const Tensor<T>& x) {
    return maxpool3d_forward(x, {2, 2, 2});
}

template <typename T>
Tensor<T> maxpool3d_backward(const MaxPoolRecord& rec, const Tensor<T>& grad_out) {
    if (grad_out.shape() != rec.out_shape)
        throw ShapeError("StaleRecord: grad_out shape disagrees with the pooling record");
    Tensor<T> grad_x(rec.in_shape);
    T* gx = grad_x.data();
    const T* gd = grad_out.data();
    // windows are disjoint, so distinct outputs route to distinct inputs
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < grad_out.size(); ++i) gx[rec.argmax[static_cast<std::size_t>(i)]] += gd[i];
    return grad_x;
}

// ---------------------------------------------------------------------------
// BatchNormalization over the channel axis.

template <typename T>
struct BatchNormState {
    Tensor<T> gamma, beta;              // (C), trainable
    Tensor<T> running_mean, running_var; // (C), updated in train mode only
    T momentum = T(0.99);
    T epsilon = T(1e-3);
};

template <typename T>
BatchNormState<T> make_batchnorm(int channels) {
    BatchNormState<T> s;
    s.gamma = Tensor<T>({channels}, T(1));
    s.beta = Tensor<T>({channels});
    s.running_mean = Tensor<T>({channels});
    s.running_var = Tensor<T>({channels}, T(1));
    return s;
}

template <typename T>
struct BatchNormTape {
    Tensor<T> x_hat;        // normalized input
    std::vector<T> inv_std; // 1/sqrt(var + eps) per channel
};

// Train mode computes batch statistics over every non-channel axis, updates
// the running stats in place (r <- momentum*r + (1-momentum)*batch_stat, biased
// variance) and fills `tape` when given. Infer mode normalizes with the stored
// running stats and touches nothing.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& s, LayerMode mode,
                            BatchNormTape<T>* tape = nullptr) {
    const int C = x.dim(x.rank() - 1);
    if (s.gamma.dim(0) != C) throw ShapeError("ShapeMismatch: batchnorm channel count");
    const std::int64_t M = x.size() / C;

    Tensor<T> out(x.shape());
    const T* xd = x.data();
    T* od = out.data();
    const T* gam = s.gamma.data();
    const T* bet = s.beta.data();

    if (mode == LayerMode::infer) {
#pragma omp parallel for schedule(static)
        for (int c = 0; c < C; ++c) {
            const T inv = T(1) / std::sqrt(s.running_var[c] + s.epsilon);
            const T mu = s.running_mean[c];
            for (std::int64_t r = 0; r < M; ++r) {
                const std::int64_t ix = r * C + c;
                od[ix] = gam[c] * ((xd[ix] - mu) * inv) + bet[c];
            }
        }
        return out;
    }

    if (M < 2) throw ShapeError("DegenerateBatch: batch statistics need at least 2 values per channel");

    if (tape) {
        tape->x_hat = Tensor<T>(x.shape());
        tape->inv_std.assign(static_cast<std::size_t>(C), T(0));
    }
    T* xh = tape ? tape->x_hat.data() : nullptr;

#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        T sum = T(0);
        for (std::int64_t r = 0; r < M; ++r) sum += xd[r * C + c];
        const T mu = sum / T(M);
        T ss = T(0);
        for (std::int64_t r = 0; r < M; ++r) {
            const T d = xd[r * C + c] - mu;
            ss += d * d;
        }
        const T var = ss / T(M); // biased, matching the running-stat update
        const T inv = T(1) / std::sqrt(var + s.epsilon);
        for (std::int64_t r = 0; r < M; ++r) {
            const std::int64_t ix = r * C + c;
            const T h = (xd[ix] - mu) * inv;
            if (xh) xh[ix] = h;
            od[ix] = gam[c] * h + bet[c];
        }
        if (tape) tape->inv_std[static_cast<std::size_t>(c)] = inv;
        s.running_mean[c] = s.momentum * s.running_mean[c] + (T(1) - s.momentum) * mu;
        s.running_var[c] = s.momentum * s.running_var[c] + (T(1) - s.momentum) * var;
    }
    return out;
}

template <typename T>
struct BatchNormBackward {
    Tensor<T> grad_x, grad_gamma, grad_beta;
};

// Full gradient including the dependence of the batch mean and variance on x:
// grad_x = gamma*inv_std/M * (M*g - sum(g) - x_hat*sum(g*x_hat)).
template <typename T>
BatchNormBackward<T> batchnorm_backward(const BatchNormState<T>& s, const BatchNormTape<T>& tape,
                                        const Tensor<T>& grad_out) {
    if (!grad_out.same_shape(tape.x_hat)) throw ShapeError("StaleRecord: batchnorm tape/gradient mismatch");
    const int C = grad_out.dim(grad_out.rank() - 1);
    const std::int64_t M = grad_out.size() / C;

    BatchNormBackward<T> g{Tensor<T>(grad_out.shape()), Tensor<T>({C}), Tensor<T>({C})};
    const T* gd = grad_out.data();
    const T* xh = tape.x_hat.data();
    T* gx = g.grad_x.data();

#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        T sum_g = T(0), sum_gh = T(0);
        for (std::int64_t r = 0; r < M; ++r) {
            const std::int64_t ix = r * C + c;
            sum_g += gd[ix];
            sum_gh += gd[ix] * xh[ix];
        }
        g.grad_beta[c] = sum_g;
        g.grad_gamma[c] = sum_gh;
        const T scale = s.gamma[c] * tape.inv_std[static_cast<std::size_t>(c)] / T(M);
        for (std::int64_t r = 0; r < M; ++r) {
            const std::int64_t ix = r * C + c;
            gx[ix] = scale * (T(M) * gd[ix] - sum_g - xh[ix] * sum_gh);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Global average pooling (N,X,Y,Z,C) -> (N,C).

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    if (x.rank() != 5) throw ShapeError("ShapeMismatch: global_avg_pool expects a rank-5 input");
    const int N = x.dim(0), C = x.dim(4);
    const std::int64_t S = std::int64_t(x.dim(1)) * x.dim(2) * x.dim(3);
    Tensor<T> out({N, C});
    const T* xd = x.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            T s = T(0);
            const T* base = xd + std::int64_t(n) * S * C;
            for (std::int64_t r = 0; r < S; ++r) s += base[r * C + c];
            out.at(n, c) = s / T(S);
        }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const std::vector<int>& in_shape, const Tensor<T>& grad_out) {
    if (in_shape.size() != 5) throw ShapeError("ShapeMismatch: global_avg_pool input shape must be rank 5");
    if (grad_out.shape() != std::vector<int>{in_shape[0], in_shape[4]})
        throw ShapeError("ShapeMismatch: global_avg_pool_backward grad shape");
    const std::int64_t S = std::int64_t(in_shape[1]) * in_shape[2] * in_shape[3];
    Tensor<T> grad_x(in_shape);
    T* gx = grad_x.data();
    const int N = in_shape[0], C = in_shape[4];
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n)
        for (std::int64_t r = 0; r < S; ++r)
            for (int c = 0; c < C; ++c)
                gx[(std::int64_t(n) * S + r) * C + c] = grad_out.at(n, c) / T(S);
    return grad_x;
}

// ---------------------------------------------------------------------------
// Dense (fully connected).

template <typename T>
struct DenseParams {
    Tensor<T> weights; // (F_in, F_out)
    Tensor<T> bias;    // (F_out)
};

template <typename T>
struct DenseBackward {
    Tensor<T> grad_x, grad_w, grad_b;
};

template <typename T>
void check_dense_shapes(const Tensor<T>& x, const DenseParams<T>& p) {
    if (x.rank() != 2 || p.weights.rank() != 2 || p.bias.rank() != 1)
        throw ShapeError("ShapeMismatch: dense expects (N,F_in) input, (F_in,F_out) weights");
    if (x.dim(1) != p.weights.dim(0) || p.weights.dim(1) != p.bias.dim(0))
        throw ShapeError("ShapeMismatch: dense feature dimensions disagree");
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const DenseParams<T>& p) {
    check_dense_shapes(x, p);
    const int N = x.dim(0), Fi = x.dim(1), Fo = p.weights.dim(1);
    Tensor<T> out({N, Fo});
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < Fo; ++o) {
            T s = p.bias[o];
            for (int i = 0; i < Fi; ++i) s += x.at(n, i) * p.weights.at(i, o);
            out.at(n, o) = s;
        }
    return out;
}

template <typename T>
DenseBackward<T> dense_backward(const Tensor<T>& x, const DenseParams<T>& p, const Tensor<T>& grad_out) {
    check_dense_shapes(x, p);
    const int N = x.dim(0), Fi = x.dim(1), Fo = p.weights.dim(1);
    if (grad_out.shape() != std::vector<int>{N, Fo})
        throw ShapeError("ShapeMismatch: dense_backward grad_out shape");
    DenseBackward<T> g{Tensor<T>({N, Fi}), Tensor<T>({Fi, Fo}), Tensor<T>({Fo})};
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < Fi; ++i) {
            T s = T(0);
            for (int o = 0; o < Fo; ++o) s += grad_out.at(n, o) * p.weights.at(i, o);
            g.grad_x.at(n, i) = s;
        }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < Fi; ++i)
        for (int o = 0; o < Fo; ++o) {
            T s = T(0);
            for (int n = 0; n < N; ++n) s += x.at(n, i) * grad_out.at(n, o);
            g.grad_w.at(i, o) = s;
        }
    for (int o = 0; o < Fo; ++o) {
        T s = T(0);
        for (int n = 0; n < N; ++n) s += grad_out.at(n, o);
        g.grad_b[o] = s;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Activations.

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* xd = x.data();
    T* od = out.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < x.size(); ++i) od[i] = xd[i] > T(0) ? xd[i] : T(0);
    return out;
}

// Subgradient 0 at exactly 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
    if (!x.same_shape(grad_out)) throw ShapeError("ShapeMismatch: relu_backward");
    Tensor<T> g(x.shape());
    const T* xd = x.data();
    const T* gd = grad_out.data();
    T* od = g.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < x.size(); ++i) od[i] = xd[i] > T(0) ? gd[i] : T(0);
    return g;
}

// Branching form avoids exp overflow at large |x|.
template <typename T>
T sigmoid_scalar(T v) {
    if (v >= T(0)) {
        const T e = std::exp(-v);
        return T(1) / (T(1) + e);
    }
    const T e = std::exp(v);
    return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* xd = x.data();
    T* od = out.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < x.size(); ++i) od[i] = sigmoid_scalar(xd[i]);
    return out;
}

// Takes the forward *output* y = sigmoid(x); gradient is y(1-y)*grad_out.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
    if (!y.same_shape(grad_out)) throw ShapeError("ShapeMismatch: sigmoid_backward");
    Tensor<T> g(y.shape());
    for (std::int64_t i = 0; i < y.size(); ++i) g[i] = y[i] * (T(1) - y[i]) * grad_out[i];
    return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout. The keep mask is a pure function of (seed, element count),
// so backward regenerates it instead of storing it.

inline void check_dropout_rate(double rate) {
    if (!(rate >= 0.0) || rate >= 1.0) throw ConfigError("BadRate: dropout rate must be in [0,1)");
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, LayerMode mode, std::uint64_t seed) {
    check_dropout_rate(rate);
    if (mode == LayerMode::infer || rate == 0.0) return x;
    Tensor<T> out(x.shape());
    auto eng = make_engine(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const T scale = T(1.0 / (1.0 - rate));
    for (std::int64_t i = 0; i < x.size(); ++i)
        out[i] = u(eng) >= rate ? x[i] * scale : T(0);
    return out;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_out, double rate, LayerMode mode, std::uint64_t seed) {
    check_dropout_rate(rate);
    if (mode == LayerMode::infer || rate == 0.0) return grad_out;
    Tensor<T> g(grad_out.shape());
    auto eng = make_engine(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const T scale = T(1.0 / (1.0 - rate));
    for (std::int64_t i = 0; i < grad_out.size(); ++i)
        g[i] = u(eng) >= rate ? grad_out[i] * scale : T(0);
    return g;
}

// ---------------------------------------------------------------------------
// Binary cross-entropy over sigmoid outputs, mean over the batch.

template <typename T>
struct BceResult {
    T loss{};
    Tensor<T> grad_p;
};

inline constexpr double kBceClampLo = 1e-7;
inline constexpr double kBceClampHi = 1.0 - 1e-7;

// Probabilities are clamped to [1e-7, 1-1e-7] before the logs; the gradient is
// zero wherever the clamp is active (consistent with the clamped objective).
template <typename T>
BceResult<T> bce_loss(const Tensor<T>& p, const std::vector<int>& y) {
    if (p.rank() != 2 || p.dim(1) != 1) throw ShapeError("ShapeMismatch: bce_loss expects predictions of shape (N,1)");
    const int N = p.dim(0);
    if (static_cast<int>(y.size()) != N) throw ShapeError("ShapeMismatch: bce_loss label count");
    for (int v : y)
        if (v != 0 && v != 1) throw DataError("BadLabel: labels must be 0 or 1");

    BceResult<T> res;
    res.grad_p = Tensor<T>(p.shape());
    T acc = T(0);
    for (int n = 0; n < N; ++n) {
        const T raw = p.at(n, 0);
        const T pc = std::clamp(raw, T(kBceClampLo), T(kBceClampHi));
        const T yn = T(y[static_cast<std::size_t>(n)]);
        acc += -(yn * std::log(pc) + (T(1) - yn) * std::log(T(1) - pc));
        const bool clamped = raw < T(kBceClampLo) || raw > T(kBceClampHi);
        res.grad_p.at(n, 0) = clamped ? T(0) : (pc - yn) / (pc * (T(1) - pc) * T(N));
    }
    res.loss = acc / T(N);
    return res;
}

} // namespace volt3d
