#include "volt3d/nifti.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

namespace volt3d {

namespace {

// Field offsets within the 348-byte NIfTI-1 header.
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffMagic = 344;

std::uint16_t load_u16(const std::uint8_t* p, bool swap) {
    return swap ? static_cast<std::uint16_t>((p[0] << 8) | p[1])
                : static_cast<std::uint16_t>((p[1] << 8) | p[0]);
}

std::uint32_t load_u32(const std::uint8_t* p, bool swap) {
    if (swap)
        return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
    return (std::uint32_t(p[3]) << 24) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[1]) << 8) | p[0];
}

std::uint64_t load_u64(const std::uint8_t* p, bool swap) {
    std::uint64_t lo, hi;
    if (swap) {
        hi = load_u32(p, true);
        lo = load_u32(p + 4, true);
    } else {
        lo = load_u32(p, false);
        hi = load_u32(p + 4, false);
    }
    return (hi << 32) | lo;
}

float load_f32(const std::uint8_t* p, bool swap) {
    std::uint32_t u = load_u32(p, swap);
    float f;
    std::memcpy(&f, &u, sizeof f);
    return f;
}

double load_f64(const std::uint8_t* p, bool swap) {
    std::uint64_t u = load_u64(p, swap);
    double d;
    std::memcpy(&d, &u, sizeof d);
    return d;
}

void store_u16(std::uint8_t* p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v & 0xff);
    p[1] = static_cast<std::uint8_t>(v >> 8);
}

void store_u32(std::uint8_t* p, std::uint32_t v) {
    p[0] = static_cast<std::uint8_t>(v & 0xff);
    p[1] = static_cast<std::uint8_t>((v >> 8) & 0xff);
    p[2] = static_cast<std::uint8_t>((v >> 16) & 0xff);
    p[3] = static_cast<std::uint8_t>((v >> 24) & 0xff);
}

void store_f32(std::uint8_t* p, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, sizeof u);
    store_u32(p, u);
}

int expected_bitpix(std::int16_t code) {
    switch (code) {
        case kDtUint8: return 8;
        case kDtInt16: return 16;
        case kDtInt32: return 32;
        case kDtFloat32: return 32;
        case kDtFloat64: return 64;
        default: return -1;
    }
}

// Reads a whole file, decompressing gzip transparently (zlib detects the
// 0x1F 0x8B magic itself and otherwise passes bytes through).
std::vector<std::uint8_t> read_file_maybe_gz(const std::filesystem::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw IoError("IoFailure: cannot open " + path.string());
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0)
        out.insert(out.end(), buf, buf + n);
    bool bad = n < 0;
    gzclose(f);
    if (bad) throw DataError("TruncatedData: gzip stream error in " + path.string());
    return out;
}

} // namespace

int NiftiHeader::squeezed_rank() const {
    int r = dim[0];
    while (r > 3 && dim[r] == 1) --r;
    return r;
}

std::array<int, 3> NiftiHeader::shape3d() const {
    int r = squeezed_rank();
    return {dim[1], r >= 2 ? int(dim[2]) : 1, r >= 3 ? int(dim[3]) : 1};
}

NiftiHeader parse_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != kNiftiHeaderSize)
        throw DataError("BadSize: header block must be exactly 348 bytes");
    const std::uint8_t* p = bytes.data();

    bool swap = false;
    std::uint32_t sz = load_u32(p + kOffSizeofHdr, false);
    if (sz != 348) {
        sz = load_u32(p + kOffSizeofHdr, true);
        if (sz != 348) throw DataError("BadSize: sizeof_hdr is not 348 under either byte order");
        swap = true;
    }

    NiftiHeader h;
    h.sizeof_hdr = 348;
    h.swapped = swap;
    for (int i = 0; i < 8; ++i)
        h.dim[i] = static_cast<std::int16_t>(load_u16(p + kOffDim + 2 * i, swap));
    h.datatype_code = static_cast<std::int16_t>(load_u16(p + kOffDatatype, swap));
    h.bitpix = static_cast<std::int16_t>(load_u16(p + kOffBitpix, swap));
    for (int i = 0; i < 8; ++i)
        h.pixdim[i] = load_f32(p + kOffPixdim + 4 * i, swap);
    h.vox_offset = load_f32(p + kOffVoxOffset, swap);
    h.scl_slope = load_f32(p + kOffSclSlope, swap);
    h.scl_inter = load_f32(p + kOffSclInter, swap);
    std::memcpy(h.magic.data(), p + kOffMagic, 4);

    const bool magic_n1 = h.magic[0] == 'n' && h.magic[1] == '+' && h.magic[2] == '1' && h.magic[3] == '\0';
    const bool magic_ni1 = h.magic[0] == 'n' && h.magic[1] == 'i' && h.magic[2] == '1' && h.magic[3] == '\0';
    if (!magic_n1 && !magic_ni1)
        throw DataError("BadMagic: not a NIfTI-1 header");

    if (h.dim[0] < 1 || h.dim[0] > 7)
        throw DataError("BadDim: dim[0] must be in [1,7]");
    for (int i = 1; i <= h.dim[0]; ++i)
        if (h.dim[i] < 1) throw DataError("BadDim: dim[" + std::to_string(i) + "] must be >= 1");
    if (h.squeezed_rank() > 3)
        throw DataError("UnsupportedRank: more than 3 non-singleton dimensions");

    int expect = expected_bitpix(h.datatype_code);
    if (expect > 0 && h.bitpix != expect)
        throw DataError("BadBitpix: bitpix " + std::to_string(h.bitpix) + " inconsistent with datatype " +
                        std::to_string(h.datatype_code));
    return h;
}

NiftiHeader read_header(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes = read_file_maybe_gz(path);
    if (bytes.size() < kNiftiHeaderSize)
        throw DataError("TruncatedData: file shorter than the 348-byte header");
    return parse_header(std::span<const std::uint8_t>(bytes.data(), kNiftiHeaderSize));
}

Volume read_volume(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes = read_file_maybe_gz(path);
    if (bytes.size() < kNiftiHeaderSize)
        throw DataError("TruncatedData: file shorter than the 348-byte header");
    NiftiHeader h = parse_header(std::span<const std::uint8_t>(bytes.data(), kNiftiHeaderSize));

    if (!h.single_file())
        throw DataError("UnsupportedFile: detached .hdr/.img pairs are not supported");
    if (expected_bitpix(h.datatype_code) < 0)
        throw DataError("UnsupportedDatatype: code " + std::to_string(h.datatype_code));

    const auto shape = h.shape3d();
    const std::int64_t count = std::int64_t(shape[0]) * shape[1] * shape[2];
    const std::size_t voxel_bytes = static_cast<std::size_t>(h.bitpix) / 8;
    const auto offset = static_cast<std::size_t>(h.vox_offset);
    if (offset + static_cast<std::size_t>(count) * voxel_bytes > bytes.size())
        throw DataError("TruncatedData: expected " + std::to_string(count * std::int64_t(voxel_bytes)) +
                        " data bytes at offset " + std::to_string(offset));

    Volume v;
    v.shape = shape;
    for (int a = 0; a < 3; ++a) {
        float s = h.pixdim[a + 1];
        v.spacing[a] = (std::isfinite(s) && s > 0.0f) ? s : 1.0f;
    }
    v.data.resize(static_cast<std::size_t>(count));
    v.source_id = path.string();

    const std::uint8_t* p = bytes.data() + offset;
    const bool swap = h.swapped;
    const bool scaled = h.scl_slope != 0.0f;
    const float slope = h.scl_slope, inter = h.scl_inter;
    for (std::int64_t i = 0; i < count; ++i, p += voxel_bytes) {
        float raw;
        switch (h.datatype_code) {
            case kDtUint8: raw = static_cast<float>(*p); break;
            case kDtInt16: raw = static_cast<float>(static_cast<std::int16_t>(load_u16(p, swap))); break;
            case kDtInt32: raw = static_cast<float>(static_cast<std::int32_t>(load_u32(p, swap))); break;
            case kDtFloat32: raw = load_f32(p, swap); break;
            default: raw = static_cast<float>(load_f64(p, swap)); break;
        }
        v.data[static_cast<std::size_t>(i)] = scaled ? raw * slope + inter : raw;
    }

    for (float x : v.data)
        if (!std::isfinite(x)) throw DataError("NonFiniteData: " + path.string());
    return v;
}

void write_volume(const std::filesystem::path& path, const Volume& v) {
    validate_volume(v);

    std::vector<std::uint8_t> out(kNiftiHeaderSize + 4 + v.data.size() * 4, 0);
    std::uint8_t* p = out.data();
    store_u32(p + kOffSizeofHdr, 348);
    store_u16(p + kOffDim + 0, 3);
    for (int a = 0; a < 3; ++a)
        store_u16(p + kOffDim + 2 * (a + 1), static_cast<std::uint16_t>(v.shape[a]));
    for (int a = 4; a < 8; ++a)
        store_u16(p + kOffDim + 2 * a, 1);
    store_u16(p + kOffDatatype, static_cast<std::uint16_t>(kDtFloat32));
    store_u16(p + kOffBitpix, 32);
    store_f32(p + kOffPixdim, 1.0f);
    for (int a = 0; a < 3; ++a)
        store_f32(p + kOffPixdim + 4 * (a + 1), v.spacing[a]);
    store_f32(p + kOffVoxOffset, 352.0f);
    store_f32(p + kOffSclSlope, 1.0f);
    store_f32(p + kOffSclInter, 0.0f);
    p[123] = 2; // xyzt_units: millimetres
    p[kOffMagic + 0] = 'n';
    p[kOffMagic + 1] = '+';
    p[kOffMagic + 2] = '1';
    p[kOffMagic + 3] = '\0';

    std::uint8_t* d = p + kNiftiHeaderSize + 4;
    for (std::size_t i = 0; i < v.data.size(); ++i)
        store_f32(d + 4 * i, v.data[i]);

    const std::string s = path.string();
    const bool gz = s.size() > 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
    if (gz) {
        gzFile f = gzopen(s.c_str(), "wb");
        if (!f) throw IoError("IoFailure: cannot open " + s + " for writing");
        std::size_t written = 0;
        while (written < out.size()) {
            int n = gzwrite(f, out.data() + written, static_cast<unsigned>(std::min<std::size_t>(out.size() - written, 1 << 20)));
            if (n <= 0) {
                gzclose(f);
                throw IoError("IoFailure: gzip write failed for " + s);
            }
            written += static_cast<std::size_t>(n);
        }
        if (gzclose(f) != Z_OK) throw IoError("IoFailure: gzip close failed for " + s);
    } else {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("IoFailure: cannot open " + s + " for writing");
        f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("IoFailure: write failed for " + s);
    }
}

} // namespace volt3d
