#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "volt3d/errors.hpp"

namespace volt3d {

// A 3D scalar grid with voxel spacing. Data is stored x-fastest, i.e. element
// (i, j, k) lives at data[i + nx*(j + ny*k)], matching NIfTI's on-disk order.
struct Volume {
    std::array<int, 3> shape{0, 0, 0};
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    std::vector<float> data;
    std::string source_id;

    Volume() = default;
    Volume(std::array<int, 3> shape_, float fill = 0.0f, std::array<float, 3> spacing_ = {1.0f, 1.0f, 1.0f})
        : shape(shape_), spacing(spacing_),
          data(static_cast<std::size_t>(shape_[0]) * shape_[1] * shape_[2], fill) {}

    std::int64_t voxel_count() const {
        return static_cast<std::int64_t>(shape[0]) * shape[1] * shape[2];
    }

    float& at(int i, int j, int k) {
        return data[static_cast<std::size_t>(i) + static_cast<std::size_t>(shape[0]) * (j + static_cast<std::size_t>(shape[1]) * k)];
    }
    float at(int i, int j, int k) const {
        return data[static_cast<std::size_t>(i) + static_cast<std::size_t>(shape[0]) * (j + static_cast<std::size_t>(shape[1]) * k)];
    }
};

// Throws unless shape/spacing/data satisfy the Volume invariants.
inline void validate_volume(const Volume& v) {
    for (int d : v.shape)
        if (d < 1) throw DataError("Volume: every extent must be >= 1");
    for (float s : v.spacing)
        if (!(s > 0.0f) || !std::isfinite(s)) throw DataError("Volume: spacing must be positive and finite");
    if (static_cast<std::int64_t>(v.data.size()) != v.voxel_count())
        throw DataError("Volume: data length does not match shape");
    for (float x : v.data)
        if (!std::isfinite(x)) throw DataError("Volume: NonFiniteData");
}

} // namespace volt3d
