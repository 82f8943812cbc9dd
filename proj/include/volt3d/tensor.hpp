#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "volt3d/errors.hpp"
#include "volt3d/volume.hpp"

namespace volt3d {

// Dense N-dimensional array, last axis fastest. Rank is at most 5 in this
// pipeline (N, X, Y, Z, C). Float for training, double for gradient checks.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, T fill = T{}) : shape_(std::move(shape)) {
        std::int64_t n = 1;
        for (int d : shape_) {
            if (d < 1) throw ShapeError("Tensor: every extent must be >= 1");
            n *= d;
        }
        data_.assign(static_cast<std::size_t>(n), fill);
    }

    Tensor(std::vector<int> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        std::int64_t n = 1;
        for (int d : shape_) {
            if (d < 1) throw ShapeError("Tensor: every extent must be >= 1");
            n *= d;
        }
        if (static_cast<std::int64_t>(data_.size()) != n)
            throw ShapeError("Tensor: data length does not match shape");
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    T operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    std::int64_t stride(int axis) const {
        std::int64_t s = 1;
        for (int a = rank() - 1; a > axis; --a) s *= shape_[static_cast<std::size_t>(a)];
        return s;
    }

    template <typename... Ix>
    std::int64_t offset(Ix... ix) const {
        const int idx[] = {static_cast<int>(ix)...};
        std::int64_t off = 0;
        for (std::size_t a = 0; a < sizeof...(Ix); ++a) off = off * shape_[a] + idx[a];
        return off;
    }

    template <typename... Ix>
    T& at(Ix... ix) { return data_[static_cast<std::size_t>(offset(ix...))]; }
    template <typename... Ix>
    T at(Ix... ix) const { return data_[static_cast<std::size_t>(offset(ix...))]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor& operator+=(const Tensor& other) {
        require_same_shape(other, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& other) {
        require_same_shape(other, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
        return *this;
    }
    Tensor& scale(T a) {
        for (T& x : data_) x *= a;
        return *this;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

    bool all_finite() const {
        for (T x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

private:
    void require_same_shape(const Tensor& other, const char* op) const {
        if (!same_shape(other)) throw ShapeError(std::string("Tensor: shape mismatch in ") + op);
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = a;
    out += b;
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = a;
    out -= b;
    return out;
}

// Hadamard product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("Tensor: shape mismatch in mul");
    Tensor<T> out = a;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

template <typename T>
Tensor<T> scaled(const Tensor<T>& a, T s) {
    Tensor<T> out = a;
    out.scale(s);
    return out;
}

template <typename T>
double sum(const Tensor<T>& a) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) acc += double(a[i]);
    return acc;
}

// Converts a Volume into a rank-4 (X, Y, Z, 1) float tensor with
// tensor(x, y, z, 0) == volume(x, y, z).
inline TensorF tensor_from_volume(const Volume& v) {
    validate_volume(v);
    const auto [nx, ny, nz] = v.shape;
    TensorF t({nx, ny, nz, 1});
    float* out = t.data();
    for (int x = 0; x < nx; ++x)
        for (int y = 0; y < ny; ++y)
            for (int z = 0; z < nz; ++z)
                out[(std::int64_t(x) * ny + y) * nz + z] = v.at(x, y, z);
    return t;
}

// Inverse of tensor_from_volume; metadata must be supplied by the caller.
inline Volume volume_from_tensor(const TensorF& t, std::array<float, 3> spacing = {1.0f, 1.0f, 1.0f}) {
    if (t.rank() != 4 || t.dim(3) != 1) throw ShapeError("volume_from_tensor: expected shape (X,Y,Z,1)");
    Volume v({t.dim(0), t.dim(1), t.dim(2)}, 0.0f, spacing);
    for (int x = 0; x < t.dim(0); ++x)
        for (int y = 0; y < t.dim(1); ++y)
            for (int z = 0; z < t.dim(2); ++z)
                v.at(x, y, z) = t.at(x, y, z, 0);
    return v;
}

} // namespace volt3d
