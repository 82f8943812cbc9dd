#include "volt3d/gradcheck_suite.hpp"

#include <random>

#include "volt3d/errors.hpp"
#include "volt3d/layers.hpp"
#include "volt3d/model.hpp"
#include "volt3d/rng.hpp"

namespace volt3d {

namespace {

constexpr std::uint64_t kSuiteSeed = 0xa1;

double project(const TensorD& out, const TensorD& r) {
    if (out.shape() != r.shape()) throw ShapeError("ShapeMismatch: gradcheck projection");
    double s = 0;
    for (std::int64_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
    return s;
}

int draw(std::mt19937_64& eng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(eng);
}

// Worst-case fold of several per-tensor reports into one table row.
GradCheckReport worst_of(const std::string& name, const std::vector<GradCheckReport>& reports) {
    GradCheckReport out;
    out.op_name = name;
    out.passed = true;
    for (const auto& r : reports) {
        if (r.max_rel_error >= out.max_rel_error) {
            out.max_rel_error = r.max_rel_error;
            out.worst_index = r.worst_index;
            out.analytic_at_worst = r.analytic_at_worst;
            out.numeric_at_worst = r.numeric_at_worst;
        }
        out.passed = out.passed && r.passed;
    }
    return out;
}

SuiteEntry check_conv3d(bool corrupt) {
    auto eng = make_engine(mix_seed(kSuiteSeed, 1));
    const int n = draw(eng, 1, 2), s = draw(eng, 4, 6), ci = draw(eng, 1, 2), co = draw(eng, 1, 3);
    auto x0 = random_uniform({n, s, s, 4, ci}, 101);
    Conv3DParams<double> p0{random_uniform({3, 3, 3, ci, co}, 102), random_uniform({co}, 103), 3};
    auto r = random_uniform({n, s - 2, s - 2, 2, co}, 104);

    ScalarFunction wrt_x{
        "conv3d/x",
        [&](const TensorD& x) { return project(conv3d_forward(x, p0), r); },
        [&](const TensorD& x) {
            TensorD g = conv3d_backward(x, p0, r).grad_x;
            if (corrupt) g[0] += 1e-2; // harness-sensitivity hook
            return g;
        },
    };
    ScalarFunction wrt_w{
        "conv3d/w",
        [&](const TensorD& w) {
            Conv3DParams<double> p{w, p0.bias, 3};
            return project(conv3d_forward(x0, p), r);
        },
        [&](const TensorD& w) {
            Conv3DParams<double> p{w, p0.bias, 3};
            return conv3d_backward(x0, p, r).grad_w;
        },
    };
    ScalarFunction wrt_b{
        "conv3d/b",
        [&](const TensorD& b) {
            Conv3DParams<double> p{p0.weights, b, 3};
            return project(conv3d_forward(x0, p), r);
        },
        [&](const TensorD& b) {
            Conv3DParams<double> p{p0.weights, b, 3};
            return conv3d_backward(x0, p, r).grad_b;
        },
    };
    const double thr = 1e-4;
    return {worst_of("conv3d", {finite_diff_check(wrt_x, x0, thr), finite_diff_check(wrt_w, p0.weights, thr),
                                finite_diff_check(wrt_b, p0.bias, thr)}),
            thr};
}

SuiteEntry check_maxpool3d() {
    auto eng = make_engine(mix_seed(kSuiteSeed, 2));
    const int n = draw(eng, 1, 2), c = draw(eng, 1, 3);
    // Continuous random values: within-window ties have measure zero.
    auto x0 = random_uniform({n, 6, 4, 4, c}, 201);
    auto r = random_uniform(maxpool3d_forward(x0).first.shape(), 202);

    ScalarFunction fn{
        "maxpool3d/x",
        [&](const TensorD& x) { return project(maxpool3d_forward(x).first, r); },
        [&](const TensorD& x) {
            auto [out, rec] = maxpool3d_forward(x);
            return maxpool3d_backward(rec, r);
        },
    };
    const double thr = 1e-4;
    return {worst_of("maxpool3d", {finite_diff_check(fn, x0, thr)}), thr};
}

SuiteEntry check_batchnorm() {
    auto eng = make_engine(mix_seed(kSuiteSeed, 3));
    const int n = draw(eng, 3, 4), c = draw(eng, 1, 3);
    auto x0 = random_uniform({n, 3, 2, 2, c}, 301);
    auto base = make_batchnorm<double>(c);
    for (int i = 0; i < c; ++i) {
        base.gamma[i] = 0.8 + 0.3 * i;
        base.beta[i] = -0.2 + 0.1 * i;
    }
    auto r = random_uniform(x0.shape(), 302);
    auto run = [&](const TensorD& x, const BatchNormState<double>& st, BatchNormTape<double>* tape) {
        BatchNormState<double> copy = st; // objective purity: no visible stat updates
        return batchnorm_forward(x, copy, LayerMode::train, tape);
    };

    ScalarFunction wrt_x{
        "batchnorm/x",
        [&](const TensorD& x) { return project(run(x, base, nullptr), r); },
        [&](const TensorD& x) {
            BatchNormTape<double> tape;
            run(x, base, &tape);
            return batchnorm_backward(base, tape, r).grad_x;
        },
    };
    ScalarFunction wrt_gamma{
        "batchnorm/gamma",
        [&](const TensorD& g) {
            BatchNormState<double> st = base;
            st.gamma = g;
            return project(run(x0, st, nullptr), r);
        },
        [&](const TensorD& g) {
            BatchNormState<double> st = base;
            st.gamma = g;
            BatchNormTape<double> tape;
            run(x0, st, &tape);
            return batchnorm_backward(st, tape, r).grad_gamma;
        },
    };
    ScalarFunction wrt_beta{
        "batchnorm/beta",
        [&](const TensorD& b) {
            BatchNormState<double> st = base;
            st.beta = b;
            return project(run(x0, st, nullptr), r);
        },
        [&](const TensorD& b) {
            BatchNormState<double> st = base;
            st.beta = b;
            BatchNormTape<double> tape;
            run(x0, st, &tape);
            return batchnorm_backward(st, tape, r).grad_beta;
        },
    };
    const double thr = 1e-4;
    return {worst_of("batchnorm",
                     {finite_diff_check(wrt_x, x0, thr), finite_diff_check(wrt_gamma, base.gamma, thr),
                      finite_diff_check(wrt_beta, base.beta, thr)}),
            thr};
}

SuiteEntry check_gap() {
    auto eng = make_engine(mix_seed(kSuiteSeed, 4));
    const int n = draw(eng, 1, 3), c = draw(eng, 1, 4);
    auto x0 = random_uniform({n, draw(eng, 2, 5), draw(eng, 2, 5), draw(eng, 2, 4), c}, 401);
    auto r = random_uniform({n, c}, 402);
    ScalarFunction fn{
        "gap/x",
        [&](const TensorD& x) { return project(global_avg_pool(x), r); },
        [&](const TensorD& x) { return global_avg_pool_backward(x.shape(), r); },
    };
    const double thr = 1e-4;
    return {worst_of("gap", {finite_diff_check(fn, x0, thr)}), thr};
}

SuiteEntry check_dense() {
    auto eng = make_engine(mix_seed(kSuiteSeed, 5));
    const int n = draw(eng, 1, 3), fi = draw(eng, 2, 6), fo = draw(eng, 1, 4);
    auto x0 = random_uniform({n, fi}, 501);
    DenseParams<double> p0{random_uniform({fi, fo}, 502), random_uniform({fo}, 503)};
    auto r = random_uniform({n, fo}, 504);

    ScalarFunction wrt_x{
        "dense/x",
        [&](const TensorD& x) { return project(dense_forward(x, p0), r); },
        [&](const TensorD& x) { return dense_backward(x, p0, r).grad_x; },
    };
    ScalarFunction wrt_w{
        "dense/w",
        [&](const TensorD& w) {
            DenseParams<double> p{w, p0.bias};
            return project(dense_forward(x0, p), r);
        },
        [&](const TensorD& w) {
            DenseParams<double> p{w, p0.bias};
            return dense_backward(x0, p, r).grad_w;
        },
    };
    ScalarFunction wrt_b{
        "dense/b",
        [&](const TensorD& b) {
            DenseParams<double> p{p0.weights, b};
            return project(dense_forward(x0, p), r);
        },
        [&](const TensorD& b) {
            DenseParams<double> p{p0.weights, b};
            return dense_backward(x0, p, r).grad_b;
        },
    };
    const double thr = 1e-4;
    return {worst_of("dense", {finite_diff_check(wrt_x, x0, thr), finite_diff_check(wrt_w, p0.weights, thr),
                               finite_diff_check(wrt_b, p0.bias, thr)}),
            thr};
}

SuiteEntry check_relu() {
    auto eng = make_engine(mix_seed(kSuiteSeed, 6));
    auto x0 = random_uniform({draw(eng, 1, 2), draw(eng, 2, 6), 3, 2, 2}, 601);
    // Keep inputs away from the kink at zero, where the subgradient is one-sided.
    for (std::int64_t i = 0; i < x0.size(); ++i)
        if (std::abs(x0[i]) < 0.1) x0[i] = x0[i] < 0 ? -0.3 : 0.3;
    auto r = random_uniform(x0.shape(), 602);
    ScalarFunction fn{
        "relu/x",
        [&](const TensorD& x) { return project(relu(x), r); },
        [&](const TensorD& x) { return relu_backward(x, r); },
    };
    const double thr = 1e-4;
    return {worst_of("relu", {finite_diff_check(fn, x0, thr)}), thr};
}

SuiteEntry check_sigmoid() {
    auto eng = make_engine(mix_seed(kSuiteSeed, 7));
    auto x0 = random_uniform({draw(eng, 2, 4), draw(eng, 1, 3)}, 701, -3.0, 3.0);
    auto r = random_uniform(x0.shape(), 702);
    ScalarFunction fn{
        "sigmoid/x",
        [&](const TensorD& x) { return project(sigmoid(x), r); },
        [&](const TensorD& x) { return sigmoid_backward(sigmoid(x), r); },
    };
    const double thr = 1e-6; // smooth scalar op
    return {worst_of("sigmoid", {finite_diff_check(fn, x0, thr)}), thr};
}

SuiteEntry check_dropout() {
    auto eng = make_engine(mix_seed(kSuiteSeed, 8));
    auto x0 = random_uniform({draw(eng, 2, 4), draw(eng, 3, 6)}, 801);
    auto r = random_uniform(x0.shape(), 802);
    const double rate = 0.4;
    const std::uint64_t mask_seed = 99; // fixed mask: the map is linear in x
    ScalarFunction fn{
        "dropout/x",
        [&](const TensorD& x) { return project(dropout(x, rate, LayerMode::train, mask_seed), r); },
        [&](const TensorD& x) { return dropout_backward(r, rate, LayerMode::train, mask_seed); },
    };
    const double thr = 1e-4;
    return {worst_of("dropout", {finite_diff_check(fn, x0, thr)}), thr};
}

SuiteEntry check_bce() {
    auto eng = make_engine(mix_seed(kSuiteSeed, 9));
    const int n = draw(eng, 2, 6);
    // Interior probabilities: the clamp at 1e-7 stays inactive, so the loss is smooth.
    auto p0 = random_uniform({n, 1}, 901, 0.1, 0.9);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) y[std::size_t(i)] = i % 2;
    ScalarFunction fn{
        "bce/p",
        [&](const TensorD& p) { return double(bce_loss(p, y).loss); },
        [&](const TensorD& p) { return bce_loss(p, y).grad_p; },
    };
    const double thr = 1e-6; // smooth scalar op
    return {worst_of("bce", {finite_diff_check(fn, p0, thr)}), thr};
}

SuiteEntry check_model_e2e() {
    ArchitectureSpec spec;
    spec.input_shape = {10, 10, 8, 1};
    spec.block_filters = {2, 3};
    spec.dense_units = 4;
    spec.dropout_rate = 0.3;

    Model<double> base = build_model<double>(spec, 424242);
    auto x = random_uniform({2, 10, 10, 8, 1}, 1001, 0.0, 1.0);
    const std::vector<int> y{0, 1};
    const std::uint64_t drop_seed = 77;

    std::vector<GradCheckReport> reports;
    std::vector<std::pair<std::string, TensorD>> targets;
    for_each_param(base, [&](const std::string& name, TensorD& t, bool trainable) {
        if (trainable) targets.emplace_back(name, t);
    });
    for (auto& [pname, value] : targets) {
        auto loss_with = [&, pname](const TensorD& v, ForwardTape<double>* tape,
                                    Model<double>* out_model) {
            Model<double> m = base; // fresh copy per evaluation keeps the objective pure
            for_each_param(m, [&](const std::string& n, TensorD& t, bool) {
                if (n == pname) t = v;
            });
            TensorD p = model_forward(m, x, LayerMode::train, drop_seed, tape);
            if (out_model) *out_model = m;
            return bce_loss(p, y);
        };
        ScalarFunction fn{
            "model_e2e/" + pname,
            [&](const TensorD& v) { return double(loss_with(v, nullptr, nullptr).loss); },
            [&](const TensorD& v) {
                ForwardTape<double> tape;
                Model<double> m;
                auto bce = loss_with(v, &tape, &m);
                return model_backward(m, tape, bce.grad_p).at(pname);
            },
        };
        // eps 1e-4: exact null directions otherwise drown in round-off noise.
        reports.push_back(finite_diff_check(fn, value, 1e-3, 1e-4));
    }
    return {worst_of("model_e2e", reports), 1e-3};
}

} // namespace

std::vector<SuiteEntry> run_gradcheck_suite(const std::string& corrupt) {
    if (!corrupt.empty() && corrupt != "conv3d")
        throw ConfigError("BadValue: unknown corrupt target '" + corrupt + "'");
    std::vector<SuiteEntry> entries;
    entries.push_back(check_conv3d(corrupt == "conv3d"));
    entries.push_back(check_maxpool3d());
    entries.push_back(check_batchnorm());
    entries.push_back(check_gap());
    entries.push_back(check_dense());
    entries.push_back(check_relu());
    entries.push_back(check_sigmoid());
    entries.push_back(check_dropout());
    entries.push_back(check_bce());
    entries.push_back(check_model_e2e());
    return entries;
}

bool suite_passed(const std::vector<SuiteEntry>& entries) {
    for (const auto& e : entries)
        if (!e.report.passed) return false;
    return true;
}

} // namespace volt3d
