#include "volt3d/model_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

namespace volt3d {

namespace {

constexpr char kMagic[4] = {'V', '3', 'D', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw DataError("CorruptRecord: checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

void save_checkpoint(const ModelF& m, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, m.rng_seed);
    const std::string spec_text = spec_to_text(m.spec);
    put_u32(out, std::uint32_t(spec_text.size()));
    out += spec_text;

    std::uint32_t count = 0;
    for_each_param(m, [&](const std::string&, const TensorF&, bool) { ++count; });
    put_u32(out, count);
    for_each_param(m, [&](const std::string& name, const TensorF& t, bool) {
        put_u32(out, std::uint32_t(name.size()));
        out += name;
        put_u32(out, std::uint32_t(t.rank()));
        for (int a = 0; a < t.rank(); ++a) put_u32(out, std::uint32_t(t.dim(a)));
        for (std::int64_t i = 0; i < t.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(t[i]));
    });

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("IoFailure: cannot open " + path + " for writing");
    os.write(out.data(), std::streamsize(out.size()));
    if (!os) throw IoError("IoFailure: short write to " + path);
}

ModelF load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("IoFailure: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

    Reader r{buf};
    if (r.bytes(4) != std::string(kMagic, 4))
        throw ConfigError("BadMagic: not a volt3d checkpoint: " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw ConfigError("VersionMismatch: checkpoint version " + std::to_string(version) +
                          ", expected " + std::to_string(kVersion));
    const std::uint64_t seed = r.u64();
    const std::string spec_text = r.bytes(r.u32());
    ArchitectureSpec spec;
    try {
        spec = spec_from_text(spec_text);
    } catch (const ConfigError& e) {
        throw DataError(std::string("CorruptRecord: bad architecture text: ") + e.what());
    }

    ModelF m = build_model<float>(spec, seed);
    const std::uint32_t count = r.u32();
    std::uint32_t expected = 0;
    for_each_param(m, [&](const std::string&, TensorF&, bool) { ++expected; });
    if (count != expected)
        throw DataError("CorruptRecord: checkpoint lists " + std::to_string(count) +
                        " tensors, architecture has " + std::to_string(expected));

    for_each_param(m, [&](const std::string& name, TensorF& t, bool) {
        const std::string rec_name = r.bytes(r.u32());
        if (rec_name != name)
            throw DataError("CorruptRecord: expected tensor '" + name + "', found '" + rec_name + "'");
        const std::uint32_t rank = r.u32();
        if (int(rank) != t.rank())
            throw DataError("CorruptRecord: rank mismatch for " + name);
        for (std::uint32_t a = 0; a < rank; ++a)
            if (int(r.u32()) != t.dim(int(a)))
                throw DataError("CorruptRecord: shape mismatch for " + name);
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = std::bit_cast<float>(r.u32());
    });
    if (r.pos != buf.size()) throw DataError("CorruptRecord: trailing bytes after last record");
    return m;
}

} // namespace volt3d
