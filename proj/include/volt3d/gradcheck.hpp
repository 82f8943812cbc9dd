#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "volt3d/errors.hpp"
#include "volt3d/rng.hpp"
#include "volt3d/tensor.hpp"

namespace volt3d {

// A scalar-valued function of one tensor argument together with its analytic
// gradient. Everything runs in double so finite differences are meaningful.
struct ScalarFunction {
    std::string name;
    std::function<double(const TensorD&)> value;
    std::function<TensorD(const TensorD&)> gradient;
};

struct GradCheckReport {
    std::string op_name;
    double max_rel_error = 0.0;
    std::vector<int> worst_index;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool passed = false;
};

inline std::vector<int> unravel_index(std::int64_t flat, const std::vector<int>& shape) {
    std::vector<int> idx(shape.size(), 0);
    for (int a = static_cast<int>(shape.size()) - 1; a >= 0; --a) {
        idx[static_cast<std::size_t>(a)] = static_cast<int>(flat % shape[static_cast<std::size_t>(a)]);
        flat /= shape[static_cast<std::size_t>(a)];
    }
    return idx;
}

// Central-difference check of fn.gradient against (f(x+eps*e) - f(x-eps*e)) / 2eps,
// one coordinate at a time. Relative error is scaled by the larger magnitude,
// floored so agreeing near-zero pairs pass.
inline GradCheckReport finite_diff_check(const ScalarFunction& fn, const TensorD& x,
                                         double threshold, double eps = 1e-5) {
    GradCheckReport rep;
    rep.op_name = fn.name;
    TensorD analytic = fn.gradient(x);
    if (!analytic.same_shape(x)) throw ShapeError("finite_diff_check: gradient shape mismatch for " + fn.name);
    if (!analytic.all_finite()) throw NumericError("NonFiniteGradient: analytic gradient of " + fn.name);
    TensorD probe = x;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double fp = fn.value(probe);
        probe[i] = orig - eps;
        const double fm = fn.value(probe);
        probe[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        if (!std::isfinite(numeric)) throw NumericError("NonFiniteGradient: numeric gradient of " + fn.name);
        const double a = analytic[i];
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(a - numeric) / denom;
        if (rel > rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_index = unravel_index(i, x.shape());
            rep.analytic_at_worst = a;
            rep.numeric_at_worst = numeric;
        }
    }
    rep.passed = rep.max_rel_error <= threshold;
    return rep;
}

// Fills a tensor with reproducible uniform values in [lo, hi).
inline TensorD random_uniform(std::vector<int> shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    TensorD t(std::move(shape));
    auto eng = make_engine(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = dist(eng);
    return t;
}

} // namespace volt3d
