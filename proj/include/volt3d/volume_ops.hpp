#pragma once

#include <array>
#include <cstdint>

#include "volt3d/volume.hpp"

namespace volt3d {

enum class ResizeMethod { trilinear, nearest };

struct ResizeSpec {
    std::array<int, 3> target_shape{128, 128, 64};
    ResizeMethod method = ResizeMethod::trilinear;
};

// Per-class augmentation recipe: every augmented copy is flipped along
// flip_axis; Gaussian noise is added on top when noise_sigma > 0 (in intensity
// units after normalization).
struct AugmentationPolicy {
    int flip_axis = 1;
    int num_augmented_per_class = 7;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

// Min-max normalization to [0,1]; a constant volume maps to all zeros.
Volume normalize_intensity(const Volume& v);

// Alternative z-score normalization (zero mean, unit variance); a constant
// volume maps to all zeros. Off by default, selectable via data.normalize.
Volume normalize_zscore(const Volume& v);

// Resampling with half-pixel-center source coordinates s = (i+0.5)*(in/out)-0.5
// clamped to [0, in-1]; trilinear blends the 8 neighbors, nearest rounds half
// up. Output spacing is rescaled by in/out per axis.
Volume resize_volume(const Volume& v, const ResizeSpec& spec);

inline Volume resize_trilinear(const Volume& v, std::array<int, 3> target) {
    return resize_volume(v, ResizeSpec{target, ResizeMethod::trilinear});
}

// Mirrors voxel indices along the chosen axis (0, 1 or 2).
Volume flip_lr(const Volume& v, int axis);

// Adds i.i.d. N(0, sigma^2) noise from a generator seeded by `seed`;
// sigma == 0 returns the input bit-exactly.
Volume add_gaussian_noise(const Volume& v, double sigma, std::uint64_t seed);

} // namespace volt3d
