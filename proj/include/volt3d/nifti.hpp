#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>

#include "volt3d/volume.hpp"

namespace volt3d {

// The subset of the 348-byte NIfTI-1 header this pipeline needs. Fields are
// stored in native byte order after decoding; `swapped` records whether the
// file itself was written in the opposite byte order (the data payload must
// then be swapped too).
struct NiftiHeader {
    std::int32_t sizeof_hdr = 348;
    std::array<std::int16_t, 8> dim{};
    std::int16_t datatype_code = 0;
    std::int16_t bitpix = 0;
    std::array<float, 8> pixdim{};
    float vox_offset = 0.0f;
    float scl_slope = 0.0f;
    float scl_inter = 0.0f;
    std::array<char, 4> magic{};
    bool swapped = false;

    bool single_file() const { return magic[0] == 'n' && magic[1] == '+'; }

    // Rank after squeezing trailing singleton dimensions.
    int squeezed_rank() const;

    // 3D extents; axes beyond the squeezed rank report extent 1.
    std::array<int, 3> shape3d() const;
};

inline constexpr std::size_t kNiftiHeaderSize = 348;

// NIfTI-1 datatype codes accepted by the loader.
inline constexpr std::int16_t kDtUint8 = 2;
inline constexpr std::int16_t kDtInt16 = 4;
inline constexpr std::int16_t kDtInt32 = 8;
inline constexpr std::int16_t kDtFloat32 = 16;
inline constexpr std::int16_t kDtFloat64 = 64;

// Decodes a 348-byte header block, detecting byte order via sizeof_hdr.
// Throws DataError tagged BadSize, BadMagic, BadDim, BadBitpix or
// UnsupportedRank.
NiftiHeader parse_header(std::span<const std::uint8_t> bytes);

// Decodes just the header of a .nii or .nii.gz file.
NiftiHeader read_header(const std::filesystem::path& path);

// Reads a .nii or .nii.gz volume (gzip detected by its leading magic bytes and
// decompressed transparently). Applies the scl_slope/scl_inter intensity
// affine unless scl_slope is zero, and casts everything to float32.
Volume read_volume(const std::filesystem::path& path);

// Writes a single-file NIfTI-1 volume: magic "n+1", vox_offset 352, datatype
// float32, identity intensity scaling. Paths ending in ".gz" are gzipped.
// read_volume(write_volume(v)) reproduces shape, spacing and data bit-exactly.
void write_volume(const std::filesystem::path& path, const Volume& v);

} // namespace volt3d
