#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "volt3d/nifti.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace volt3d;
using namespace volt3d::test;

namespace {

std::vector<double> iota_values(std::size_t n, double start = 0.0, double step = 1.0) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = start + step * static_cast<double>(i);
    return v;
}

} // namespace

TEST_CASE("parse_header decodes a hand-built little-endian header") {
    NiftiFixture fx;
    fx.dim[0] = 3;
    fx.dim[1] = 128;
    fx.dim[2] = 128;
    fx.dim[3] = 64;
    fx.pixdim[1] = 1.5f;
    fx.pixdim[2] = 1.5f;
    fx.pixdim[3] = 2.0f;
    fx.scl_slope = 1.0f;
    auto bytes = encode_nifti_header(fx);

    NiftiHeader h = parse_header(bytes);
    CHECK(h.sizeof_hdr == 348);
    CHECK_FALSE(h.swapped);
    CHECK(h.dim[0] == 3);
    CHECK(h.shape3d() == std::array<int, 3>{128, 128, 64});
    CHECK(h.datatype_code == kDtFloat32);
    CHECK(h.bitpix == 32);
    CHECK(h.pixdim[1] == doctest::Approx(1.5f));
    CHECK(h.pixdim[3] == doctest::Approx(2.0f));
    CHECK(h.vox_offset == doctest::Approx(352.0f));
    CHECK(h.scl_slope == doctest::Approx(1.0f));
    CHECK(h.single_file());
}

TEST_CASE("big-endian and little-endian encodings decode to identical headers") {
    NiftiFixture fx;
    fx.dim[0] = 3;
    fx.dim[1] = 10;
    fx.dim[2] = 12;
    fx.dim[3] = 14;
    fx.datatype = kDtInt16;
    fx.bitpix = 16;
    fx.pixdim[1] = 0.9f;
    fx.pixdim[2] = 1.1f;
    fx.pixdim[3] = 1.3f;
    fx.scl_slope = 2.0f;
    fx.scl_inter = -3.5f;

    NiftiHeader le = parse_header(encode_nifti_header(fx));
    fx.big_endian = true;
    NiftiHeader be = parse_header(encode_nifti_header(fx));

    CHECK_FALSE(le.swapped);
    CHECK(be.swapped);
    CHECK(le.dim == be.dim);
    CHECK(le.datatype_code == be.datatype_code);
    CHECK(le.bitpix == be.bitpix);
    for (int i = 0; i < 8; ++i) CHECK(le.pixdim[i] == be.pixdim[i]);
    CHECK(le.vox_offset == be.vox_offset);
    CHECK(le.scl_slope == be.scl_slope);
    CHECK(le.scl_inter == be.scl_inter);
    CHECK(le.magic == be.magic);
}

TEST_CASE("parse_header rejects malformed headers") {
    NiftiFixture fx;
    fx.dim[0] = 3;
    fx.dim[1] = 4;
    fx.dim[2] = 4;
    fx.dim[3] = 4;

    SUBCASE("bad magic") {
        fx.magic[0] = 'x';
        fx.magic[1] = 'x';
        fx.magic[2] = 'x';
        fx.magic[3] = 'x';
        auto bytes = encode_nifti_header(fx);
        expect_error<DataError>([&] { parse_header(bytes); }, "BadMagic");
    }
    SUBCASE("bad sizeof_hdr under both byte orders") {
        auto bytes = encode_nifti_header(fx);
        put_uint(bytes, 0, 20, 4, false);
        expect_error<DataError>([&] { parse_header(bytes); }, "BadSize");
    }
    SUBCASE("wrong block length") {
        auto bytes = encode_nifti_header(fx);
        bytes.pop_back();
        expect_error<DataError>([&] { parse_header(bytes); }, "BadSize");
    }
    SUBCASE("bitpix inconsistent with datatype") {
        fx.datatype = kDtFloat32;
        fx.bitpix = 16;
        auto bytes = encode_nifti_header(fx);
        expect_error<DataError>([&] { parse_header(bytes); }, "BadBitpix");
    }
    SUBCASE("zero extent") {
        fx.dim[2] = 0;
        auto bytes = encode_nifti_header(fx);
        expect_error<DataError>([&] { parse_header(bytes); }, "BadDim");
    }
}

TEST_CASE("trailing singleton dimensions squeeze down to rank 3") {
    NiftiFixture fx;
    fx.dim[0] = 5;
    fx.dim[1] = 8;
    fx.dim[2] = 6;
    fx.dim[3] = 4;
    fx.dim[4] = 1;
    fx.dim[5] = 1;
    NiftiHeader h = parse_header(encode_nifti_header(fx));
    CHECK(h.squeezed_rank() == 3);
    CHECK(h.shape3d() == std::array<int, 3>{8, 6, 4});

    fx.dim[4] = 2; // a real fourth axis cannot be squeezed away
    auto bytes = encode_nifti_header(fx);
    expect_error<DataError>([&] { parse_header(bytes); }, "UnsupportedRank");
}

TEST_CASE("read_volume decodes every supported datatype, plain and gzipped") {
    struct Case {
        std::int16_t datatype;
        std::int16_t bitpix;
        std::vector<double> values;
    };
    const std::vector<Case> cases = {
        {kDtUint8, 8, {0, 1, 17, 255, 128, 3, 64, 200, 5, 9, 250, 31}},
        {kDtInt16, 16, {-300, 0, 17, 1000, -32768, 32767, 12, -1, 255, 256, -255, 7}},
        {kDtInt32, 32, {-70000, 0, 123456, -1, 2147483647.0, -2147483648.0, 42, 9, -9, 1000000, 3, 8}},
        {kDtFloat32, 32, {0.5, -1.25, 3.75, 100.0, -0.0078125, 12345.5, 0.0, 1.0, -2.5, 7.5, 0.25, -0.25}},
        {kDtFloat64, 64, {0.1, -2.7, 3.14159, 1e10, -1e-3, 42.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0}},
    };
    for (const auto& c : cases) {
        CAPTURE(c.datatype);
        NiftiFixture fx;
        fx.dim[0] = 3;
        fx.dim[1] = 3;
        fx.dim[2] = 2;
        fx.dim[3] = 2;
        fx.datatype = c.datatype;
        fx.bitpix = c.bitpix;
        auto blob = encode_nifti_file(fx, c.values);

        auto plain = data_dir() / ("dt" + std::to_string(c.datatype) + ".nii");
        auto gz = data_dir() / ("dt" + std::to_string(c.datatype) + ".nii.gz");
        write_bytes(plain, blob);
        write_bytes_gz(gz, blob);

        Volume v = read_volume(plain);
        REQUIRE(v.shape == std::array<int, 3>{3, 2, 2});
        for (std::size_t i = 0; i < c.values.size(); ++i)
            CHECK(v.data[i] == static_cast<float>(c.values[i]));

        Volume vg = read_volume(gz);
        CHECK(vg.shape == v.shape);
        CHECK(vg.data == v.data); // gzip transparency, bit-exact
    }
}

TEST_CASE("big-endian payloads decode to the same values as little-endian ones") {
    NiftiFixture fx;
    fx.dim[0] = 3;
    fx.dim[1] = 2;
    fx.dim[2] = 2;
    fx.dim[3] = 1;
    fx.datatype = kDtInt16;
    fx.bitpix = 16;
    const std::vector<double> values = {-7, 513, 0, 255};

    auto le_path = data_dir() / "endian_le.nii";
    write_bytes(le_path, encode_nifti_file(fx, values));
    fx.big_endian = true;
    auto be_path = data_dir() / "endian_be.nii";
    write_bytes(be_path, encode_nifti_file(fx, values));

    Volume le = read_volume(le_path);
    Volume be = read_volume(be_path);
    CHECK(le.data == be.data);
}

TEST_CASE("scl_slope and scl_inter scale voxels; slope zero means no scaling") {
    NiftiFixture fx;
    fx.dim[0] = 3;
    fx.dim[1] = 2;
    fx.dim[2] = 1;
    fx.dim[3] = 1;

    SUBCASE("affine applied") {
        fx.scl_slope = 2.0f;
        fx.scl_inter = -1.0f;
        auto path = data_dir() / "scl_affine.nii";
        write_bytes(path, encode_nifti_file(fx, {0.5, 3.0}));
        Volume v = read_volume(path);
        CHECK(v.data[0] == doctest::Approx(0.0f));  // 0.5 * 2 - 1
        CHECK(v.data[1] == doctest::Approx(5.0f));
    }
    SUBCASE("slope zero leaves raw values") {
        fx.scl_slope = 0.0f;
        fx.scl_inter = 99.0f;
        auto path = data_dir() / "scl_zero.nii";
        write_bytes(path, encode_nifti_file(fx, {0.5, 3.0}));
        Volume v = read_volume(path);
        CHECK(v.data[0] == 0.5f);
        CHECK(v.data[1] == 3.0f);
    }
}

TEST_CASE("read_volume rejects broken files") {
    NiftiFixture fx;
    fx.dim[0] = 3;
    fx.dim[1] = 4;
    fx.dim[2] = 4;
    fx.dim[3] = 4;

    SUBCASE("truncated payload") {
        auto blob = encode_nifti_file(fx, iota_values(64));
        blob.resize(blob.size() - 100);
        auto path = data_dir() / "truncated.nii";
        write_bytes(path, blob);
        expect_error<DataError>([&] { read_volume(path); }, "TruncatedData");
    }
    SUBCASE("file shorter than a header") {
        auto path = data_dir() / "stub.nii";
        write_bytes(path, std::vector<std::uint8_t>(100, 0));
        expect_error<DataError>([&] { read_volume(path); }, "TruncatedData");
    }
    SUBCASE("unsupported datatype code") {
        fx.datatype = 128; // RGB triple
        fx.bitpix = 24;
        auto path = data_dir() / "rgb.nii";
        write_bytes(path, encode_nifti_file(fx, {}));
        expect_error<DataError>([&] { read_volume(path); }, "UnsupportedDatatype");
    }
    SUBCASE("detached header/image pair") {
        fx.magic[1] = 'i';
        fx.magic[2] = '1';
        fx.vox_offset = 0.0f;
        auto path = data_dir() / "pair.hdr";
        write_bytes(path, encode_nifti_file(fx, iota_values(64)));
        expect_error<DataError>([&] { read_volume(path); }, "UnsupportedFile");
    }
    SUBCASE("missing file") {
        expect_error<IoError>([&] { read_volume(data_dir() / "no_such_file.nii"); }, "IoFailure");
    }
}

TEST_CASE("write_volume round-trips bit-exactly, plain and gzipped") {
    Volume v = make_random_volume({5, 4, 3}, 0xBEEF, -10.0f, 10.0f);
    v.spacing = {0.8f, 1.0f, 1.25f};

    for (const char* name : {"roundtrip.nii", "roundtrip.nii.gz"}) {
        auto path = data_dir() / name;
        write_volume(path, v);
        Volume r = read_volume(path);
        CHECK(r.shape == v.shape);
        CHECK(r.spacing == v.spacing);
        CHECK(r.data == v.data); // float32 all the way: bit-exact
    }
}

TEST_CASE("write_volume emits the documented on-disk layout") {
    Volume v({2, 2, 2}, 0.0f);

    SUBCASE("plain file is 352 header bytes plus 4 bytes per voxel") {
        auto path = data_dir() / "layout.nii";
        write_volume(path, v);
        CHECK(std::filesystem::file_size(path) == 352 + 8 * 4);
    }
    SUBCASE("gz path begins with the gzip magic") {
        auto path = data_dir() / "layout.nii.gz";
        write_volume(path, v);
        std::ifstream f(path, std::ios::binary);
        unsigned char m[2] = {0, 0};
        f.read(reinterpret_cast<char*>(m), 2);
        CHECK(m[0] == 0x1f);
        CHECK(m[1] == 0x8b);
    }
    SUBCASE("header parses back with the documented fields") {
        auto path = data_dir() / "layout.nii";
        write_volume(path, v);
        std::ifstream f(path, std::ios::binary);
        std::vector<std::uint8_t> head(kNiftiHeaderSize);
        f.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
        NiftiHeader h = parse_header(head);
        CHECK(h.datatype_code == kDtFloat32);
        CHECK(h.bitpix == 32);
        CHECK(h.vox_offset == doctest::Approx(352.0f));
        CHECK(h.scl_slope == doctest::Approx(1.0f));
        CHECK(h.scl_inter == doctest::Approx(0.0f));
        CHECK(h.single_file());
    }
}

TEST_CASE("write_volume validates its input") {
    Volume v({2, 2, 2}, 0.0f);
    v.data.pop_back();
    auto path = data_dir() / "invalid.nii";
    expect_error<DataError>([&] { write_volume(path, v); }, "data length");
}
