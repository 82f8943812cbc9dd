#include "volt3d/volume_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "volt3d/rng.hpp"

namespace volt3d {

Volume normalize_intensity(const Volume& v) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (float x : v.data) {
        if (!std::isfinite(x)) throw DataError("NonFiniteInput: normalize_intensity");
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    Volume out = v;
    if (hi == lo) {
        std::fill(out.data.begin(), out.data.end(), 0.0f);
        return out;
    }
    const double scale = 1.0 / (double(hi) - double(lo));
    for (float& x : out.data)
        x = static_cast<float>((double(x) - double(lo)) * scale);
    return out;
}

Volume normalize_zscore(const Volume& v) {
    double sum = 0.0;
    for (float x : v.data) {
        if (!std::isfinite(x)) throw DataError("NonFiniteInput: normalize_zscore");
        sum += x;
    }
    const double n = double(v.data.size());
    const double mean = sum / n;
    double ss = 0.0;
    for (float x : v.data) {
        const double d = double(x) - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    Volume out = v;
    if (sd == 0.0) {
        std::fill(out.data.begin(), out.data.end(), 0.0f);
        return out;
    }
    for (float& x : out.data)
        x = static_cast<float>((double(x) - mean) / sd);
    return out;
}

namespace {

struct AxisSamples {
    std::vector<int> lo, hi;   // neighbor indices
    std::vector<float> frac;   // blend weight toward hi
};

AxisSamples axis_samples(int in, int out, bool nearest) {
    AxisSamples s;
    s.lo.resize(out);
    s.hi.resize(out);
    s.frac.resize(out);
    const double scale = double(in) / double(out);
    for (int i = 0; i < out; ++i) {
        double src = (i + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, double(in - 1));
        if (nearest) {
            int idx = std::min(int(std::floor(src + 0.5)), in - 1);
            s.lo[i] = s.hi[i] = idx;
            s.frac[i] = 0.0f;
        } else {
            int lo = int(std::floor(src));
            s.lo[i] = lo;
            s.hi[i] = std::min(lo + 1, in - 1);
            s.frac[i] = static_cast<float>(src - lo);
        }
    }
    return s;
}

} // namespace

Volume resize_volume(const Volume& v, const ResizeSpec& spec) {
    for (int d : spec.target_shape)
        if (d < 1) throw DataError("ResizeSpec: target extents must be >= 1");
    validate_volume(v);

    const auto [ix, iy, iz] = v.shape;
    const auto [ox, oy, oz] = spec.target_shape;
    const bool nearest = spec.method == ResizeMethod::nearest;
    const AxisSamples sx = axis_samples(ix, ox, nearest);
    const AxisSamples sy = axis_samples(iy, oy, nearest);
    const AxisSamples sz = axis_samples(iz, oz, nearest);

    Volume out;
    out.shape = spec.target_shape;
    for (int a = 0; a < 3; ++a)
        out.spacing[a] = v.spacing[a] * float(double(v.shape[a]) / double(spec.target_shape[a]));
    out.data.resize(std::size_t(ox) * oy * oz);
    out.source_id = v.source_id;

    const float* src = v.data.data();
    float* dst = out.data.data();
    const std::int64_t sxy = std::int64_t(ix) * iy;

#pragma omp parallel for schedule(static)
    for (int k = 0; k < oz; ++k) {
        const int k0 = sz.lo[k], k1 = sz.hi[k];
        const float fz = sz.frac[k];
        for (int j = 0; j < oy; ++j) {
            const int j0 = sy.lo[j], j1 = sy.hi[j];
            const float fy = sy.frac[j];
            float* row = dst + std::int64_t(ox) * (j + std::int64_t(oy) * k);
            for (int i = 0; i < ox; ++i) {
                const int i0 = sx.lo[i], i1 = sx.hi[i];
                const float fx = sx.frac[i];
                auto at = [&](int a, int b, int c) { return src[a + std::int64_t(ix) * b + sxy * c]; };
                const float c00 = at(i0, j0, k0) + fx * (at(i1, j0, k0) - at(i0, j0, k0));
                const float c10 = at(i0, j1, k0) + fx * (at(i1, j1, k0) - at(i0, j1, k0));
                const float c01 = at(i0, j0, k1) + fx * (at(i1, j0, k1) - at(i0, j0, k1));
                const float c11 = at(i0, j1, k1) + fx * (at(i1, j1, k1) - at(i0, j1, k1));
                const float c0 = c00 + fy * (c10 - c00);
                const float c1 = c01 + fy * (c11 - c01);
                row[i] = c0 + fz * (c1 - c0);
            }
        }
    }
    return out;
}

Volume flip_lr(const Volume& v, int axis) {
    if (axis < 0 || axis > 2) throw DataError("BadAxis: flip axis must be 0, 1 or 2");
    Volume out = v;
    const auto [nx, ny, nz] = v.shape;
#pragma omp parallel for schedule(static)
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                int mi = axis == 0 ? nx - 1 - i : i;
                int mj = axis == 1 ? ny - 1 - j : j;
                int mk = axis == 2 ? nz - 1 - k : k;
                out.at(i, j, k) = v.at(mi, mj, mk);
            }
    return out;
}

Volume add_gaussian_noise(const Volume& v, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DataError("BadSigma: noise sigma must be finite and >= 0");
    if (sigma == 0.0) return v;
    Volume out = v;
    auto eng = make_engine(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    for (float& x : out.data)
        x = static_cast<float>(double(x) + dist(eng));
    return out;
}

} // namespace volt3d
