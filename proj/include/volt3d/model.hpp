#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "volt3d/errors.hpp"
#include "volt3d/layers.hpp"
#include "volt3d/rng.hpp"
#include "volt3d/tensor.hpp"

namespace volt3d {

// ---------------------------------------------------------------------------
// Architecture description.

enum class BlockOrder { conv_relu_pool_bn, conv_bn_relu_pool };

struct ArchitectureSpec {
    std::array<int, 4> input_shape{128, 128, 64, 1}; // (X, Y, Z, C)
    std::vector<int> block_filters{64, 64, 128, 256};
    int dense_units = 512;
    double dropout_rate = 0.3;
    BlockOrder block_order = BlockOrder::conv_relu_pool_bn;
    int kernel = 3;

    bool operator==(const ArchitectureSpec&) const = default;
};

void validate_spec(const ArchitectureSpec& spec);

// Canonical single-line text form; identical specs serialize identically.
std::string spec_to_text(const ArchitectureSpec& spec);
ArchitectureSpec spec_from_text(const std::string& text);

// Pool window for one block input: degenerate axes (extent 1) pass through.
inline std::array<int, 3> pool_window_for(const std::array<int, 3>& extents) {
    return {extents[0] >= 2 ? 2 : 1, extents[1] >= 2 ? 2 : 1, extents[2] >= 2 ? 2 : 1};
}

// Layer-by-layer output shapes for batch size 1: per block the conv output and
// the pool output, then GAP, hidden dense, head. Throws InfeasibleSpec when a
// conv no longer fits.
std::vector<std::vector<int>> trace_shapes(const ArchitectureSpec& spec);

// ---------------------------------------------------------------------------
// Model state.

template <typename T>
struct ConvBlock {
    Conv3DParams<T> conv;
    BatchNormState<T> bn;
};

template <typename T>
struct Model {
    ArchitectureSpec spec;
    std::uint64_t rng_seed = 0;
    std::vector<ConvBlock<T>> blocks;
    DenseParams<T> fc1, fc2;
};

using ModelF = Model<float>;

// Visits every parameter tensor in the fixed serialization order. `fn` is
// called as fn(name, tensor&, trainable).
template <typename T, typename Fn>
void for_each_param(Model<T>& m, Fn&& fn) {
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        const std::string prefix = "block" + std::to_string(i);
        auto& blk = m.blocks[i];
        fn(prefix + "/conv/w", blk.conv.weights, true);
        fn(prefix + "/conv/b", blk.conv.bias, true);
        fn(prefix + "/bn/gamma", blk.bn.gamma, true);
        fn(prefix + "/bn/beta", blk.bn.beta, true);
        fn(prefix + "/bn/running_mean", blk.bn.running_mean, false);
        fn(prefix + "/bn/running_var", blk.bn.running_var, false);
    }
    fn("fc1/w", m.fc1.weights, true);
    fn("fc1/b", m.fc1.bias, true);
    fn("fc2/w", m.fc2.weights, true);
    fn("fc2/b", m.fc2.bias, true);
}

template <typename T, typename Fn>
void for_each_param(const Model<T>& m, Fn&& fn) {
    for_each_param(const_cast<Model<T>&>(m),
                   [&](const std::string& name, Tensor<T>& t, bool trainable) {
                       fn(name, static_cast<const Tensor<T>&>(t), trainable);
                   });
}

// Ordered name -> tensor collection used for gradients and optimizer state.
template <typename T>
struct NamedTensors {
    std::vector<std::string> names;
    std::vector<Tensor<T>> tensors;

    Tensor<T>& at(const std::string& name) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return tensors[i];
        throw ShapeError("KeyMismatch: no tensor named " + name);
    }
    const Tensor<T>& at(const std::string& name) const {
        return const_cast<NamedTensors*>(this)->at(name);
    }
};

template <typename T>
using Gradients = NamedTensors<T>;

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> trainable_params(Model<T>& m) {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for_each_param(m, [&](const std::string& name, Tensor<T>& t, bool trainable) {
        if (trainable) out.emplace_back(name, &t);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Construction.

template <typename T>
Model<T> build_model(const ArchitectureSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    trace_shapes(spec); // rejects InfeasibleSpec up front

    Model<T> m;
    m.spec = spec;
    m.rng_seed = seed;
    auto eng = make_engine(seed);
    auto glorot = [&](Tensor<T>& w, std::int64_t fan_in, std::int64_t fan_out) {
        const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::int64_t i = 0; i < w.size(); ++i) w[i] = T(dist(eng));
    };

    const int k = spec.kernel;
    int c_in = spec.input_shape[3];
    for (int f : spec.block_filters) {
        ConvBlock<T> blk;
        blk.conv.kernel = k;
        blk.conv.weights = Tensor<T>({k, k, k, c_in, f});
        blk.conv.bias = Tensor<T>({f});
        glorot(blk.conv.weights, std::int64_t(k) * k * k * c_in, std::int64_t(k) * k * k * f);
        blk.bn = make_batchnorm<T>(f);
        m.blocks.push_back(std::move(blk));
        c_in = f;
    }
    m.fc1.weights = Tensor<T>({c_in, spec.dense_units});
    m.fc1.bias = Tensor<T>({spec.dense_units});
    glorot(m.fc1.weights, c_in, spec.dense_units);
    m.fc2.weights = Tensor<T>({spec.dense_units, 1});
    m.fc2.bias = Tensor<T>({1});
    glorot(m.fc2.weights, spec.dense_units, 1);
    return m;
}

// (trainable, total); the BN running statistics are the only non-trainable part.
template <typename T>
std::pair<std::int64_t, std::int64_t> count_parameters(const Model<T>& m) {
    std::int64_t trainable = 0, total = 0;
    for_each_param(m, [&](const std::string&, const Tensor<T>& t, bool is_trainable) {
        total += t.size();
        if (is_trainable) trainable += t.size();
    });
    return {trainable, total};
}

// ---------------------------------------------------------------------------
// Forward / backward.

template <typename T>
struct ForwardTape {
    bool train = false;
    std::uint64_t dropout_seed = 0;
    struct BlockTape {
        Tensor<T> conv_in;
        Tensor<T> pre_relu; // conv output (block order A) or BN output (order B)
        MaxPoolRecord pool_rec;
        BatchNormTape<T> bn;
    };
    std::vector<BlockTape> blocks;
    std::vector<int> gap_in_shape;
    Tensor<T> gap_out;   // input to fc1
    Tensor<T> fc1_out;   // pre-activation
    Tensor<T> drop_in;   // relu(fc1_out)
    Tensor<T> drop_out;  // input to fc2
    Tensor<T> p;         // sigmoid output
};

// Runs the network. Train mode updates BN running statistics in place and
// requires N >= 2; infer mode is a pure function of (parameters, input).
// `seed` drives dropout only.
template <typename T>
Tensor<T> model_forward(Model<T>& m, const Tensor<T>& x, LayerMode mode, std::uint64_t seed,
                        ForwardTape<T>* tape = nullptr) {
    const auto& in = m.spec.input_shape;
    if (x.rank() != 5 || x.dim(1) != in[0] || x.dim(2) != in[1] || x.dim(3) != in[2] || x.dim(4) != in[3])
        throw ShapeError("ShapeMismatch: model input must be (N," + std::to_string(in[0]) + "," +
                         std::to_string(in[1]) + "," + std::to_string(in[2]) + "," + std::to_string(in[3]) + ")");
    if (!x.all_finite()) throw DataError("NonFiniteInput: model_forward");
    const bool train = mode == LayerMode::train;
    if (train && x.dim(0) < 2)
        throw ShapeError("DegenerateBatch: train-mode forward needs batch size >= 2");

    if (tape) {
        *tape = ForwardTape<T>{};
        tape->train = train;
        tape->dropout_seed = seed;
        tape->blocks.resize(m.blocks.size());
    }

    Tensor<T> cur = x;
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        auto& blk = m.blocks[i];
        auto* bt = tape ? &tape->blocks[i] : nullptr;
        if (bt) bt->conv_in = cur;
        Tensor<T> conv_out = conv3d_forward(cur, blk.conv);
        const std::array<int, 3> win =
            pool_window_for({conv_out.dim(1), conv_out.dim(2), conv_out.dim(3)});
        if (m.spec.block_order == BlockOrder::conv_relu_pool_bn) {
            if (bt) bt->pre_relu = conv_out;
            Tensor<T> act = relu(conv_out);
            auto [pooled, rec] = maxpool3d_forward(act, win);
            if (bt) bt->pool_rec = std::move(rec);
            cur = batchnorm_forward(pooled, blk.bn, mode, bt ? &bt->bn : nullptr);
        } else {
            Tensor<T> bn_out = batchnorm_forward(conv_out, blk.bn, mode, bt ? &bt->bn : nullptr);
            if (bt) bt->pre_relu = bn_out;
            Tensor<T> act = relu(bn_out);
            auto [pooled, rec] = maxpool3d_forward(act, win);
            if (bt) bt->pool_rec = std::move(rec);
            cur = std::move(pooled);
        }
    }

    if (tape) tape->gap_in_shape = cur.shape();
    Tensor<T> gap = global_avg_pool(cur);
    if (tape) tape->gap_out = gap;
    Tensor<T> h = dense_forward(gap, m.fc1);
    if (tape) tape->fc1_out = h;
    Tensor<T> a = relu(h);
    if (tape) tape->drop_in = a;
    Tensor<T> d = dropout(a, m.spec.dropout_rate, mode, seed);
    if (tape) tape->drop_out = d;
    Tensor<T> logits = dense_forward(d, m.fc2);
    Tensor<T> p = sigmoid(logits);
    if (tape) tape->p = p;
    return p;
}

// Gradients for every trainable parameter, keys matching trainable_params
// order. Requires a tape recorded by a train-mode forward.
template <typename T>
Gradients<T> model_backward(Model<T>& m, const ForwardTape<T>& tape, const Tensor<T>& grad_p) {
    if (!tape.train) throw ShapeError("StaleTape: backward needs a train-mode tape");
    if (tape.blocks.size() != m.blocks.size() || !grad_p.same_shape(tape.p))
        throw ShapeError("StaleTape: tape does not match this model/gradient");

    Gradients<T> g;
    auto push = [&](const std::string& name, Tensor<T> t) {
        g.names.push_back(name);
        g.tensors.push_back(std::move(t));
    };

    // head
    Tensor<T> d = sigmoid_backward(tape.p, grad_p);
    DenseBackward<T> fc2_g = dense_backward(tape.drop_out, m.fc2, d);
    d = dropout_backward(fc2_g.grad_x, m.spec.dropout_rate, LayerMode::train, tape.dropout_seed);
    d = relu_backward(tape.fc1_out, d);
    DenseBackward<T> fc1_g = dense_backward(tape.gap_out, m.fc1, d);
    d = global_avg_pool_backward(tape.gap_in_shape, fc1_g.grad_x);

    // blocks, reversed
    std::vector<Conv3DBackward<T>> conv_grads(m.blocks.size());
    std::vector<BatchNormBackward<T>> bn_grads(m.blocks.size());
    for (std::size_t r = m.blocks.size(); r-- > 0;) {
        auto& blk = m.blocks[r];
        const auto& bt = tape.blocks[r];
        if (m.spec.block_order == BlockOrder::conv_relu_pool_bn) {
            bn_grads[r] = batchnorm_backward(blk.bn, bt.bn, d);
            d = maxpool3d_backward(bt.pool_rec, bn_grads[r].grad_x);
            d = relu_backward(bt.pre_relu, d);
            conv_grads[r] = conv3d_backward(bt.conv_in, blk.conv, d);
        } else {
            d = maxpool3d_backward(bt.pool_rec, d);
            d = relu_backward(bt.pre_relu, d);
            bn_grads[r] = batchnorm_backward(blk.bn, bt.bn, d);
            conv_grads[r] = conv3d_backward(bt.conv_in, blk.conv, bn_grads[r].grad_x);
        }
        d = conv_grads[r].grad_x;
    }

    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        const std::string prefix = "block" + std::to_string(i);
        push(prefix + "/conv/w", std::move(conv_grads[i].grad_w));
        push(prefix + "/conv/b", std::move(conv_grads[i].grad_b));
        push(prefix + "/bn/gamma", std::move(bn_grads[i].grad_gamma));
        push(prefix + "/bn/beta", std::move(bn_grads[i].grad_beta));
    }
    push("fc1/w", std::move(fc1_g.grad_w));
    push("fc1/b", std::move(fc1_g.grad_b));
    push("fc2/w", std::move(fc2_g.grad_w));
    push("fc2/b", std::move(fc2_g.grad_b));
    return g;
}

} // namespace volt3d
