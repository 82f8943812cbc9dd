#include "volt3d/model.hpp"

#include <charconv>
#include <sstream>

namespace volt3d {

void validate_spec(const ArchitectureSpec& spec) {
    for (int e : spec.input_shape)
        if (e < 1) throw ConfigError("BadSpec: input_shape extents must be >= 1");
    for (int f : spec.block_filters)
        if (f < 1) throw ConfigError("BadSpec: block filter counts must be >= 1");
    if (spec.dense_units < 1) throw ConfigError("BadSpec: dense_units must be >= 1");
    if (!(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0))
        throw ConfigError("BadSpec: dropout_rate must lie in [0,1)");
    if (spec.kernel < 1) throw ConfigError("BadSpec: kernel must be >= 1");
}

std::vector<std::vector<int>> trace_shapes(const ArchitectureSpec& spec) {
    validate_spec(spec);
    std::vector<std::vector<int>> out;
    std::array<int, 3> sp{spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]};
    int channels = spec.input_shape[3];
    const int k = spec.kernel;
    for (std::size_t i = 0; i < spec.block_filters.size(); ++i) {
        for (int a = 0; a < 3; ++a) {
            if (sp[a] < k)
                throw ConfigError("InfeasibleSpec: block " + std::to_string(i) + " conv needs spatial extents >= " +
                                  std::to_string(k) + ", got (" + std::to_string(sp[0]) + "," +
                                  std::to_string(sp[1]) + "," + std::to_string(sp[2]) + ")");
            sp[a] -= k - 1;
        }
        channels = spec.block_filters[i];
        out.push_back({1, sp[0], sp[1], sp[2], channels});
        const auto win = pool_window_for(sp);
        for (int a = 0; a < 3; ++a) sp[a] /= win[a];
        out.push_back({1, sp[0], sp[1], sp[2], channels});
    }
    out.push_back({1, channels});
    out.push_back({1, spec.dense_units});
    out.push_back({1, 1});
    return out;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

int parse_int(const std::string& s) {
    int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ConfigError("BadSpecText: expected integer, got '" + s + "'");
    return v;
}

double parse_double(const std::string& s) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ConfigError("BadSpecText: expected number, got '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

} // namespace

std::string spec_to_text(const ArchitectureSpec& spec) {
    std::ostringstream os;
    os << "input=" << spec.input_shape[0] << 'x' << spec.input_shape[1] << 'x' << spec.input_shape[2]
       << 'x' << spec.input_shape[3] << ";filters=";
    for (std::size_t i = 0; i < spec.block_filters.size(); ++i) {
        if (i) os << ',';
        os << spec.block_filters[i];
    }
    os << ";dense=" << spec.dense_units << ";dropout=" << fmt_double(spec.dropout_rate) << ";order="
       << (spec.block_order == BlockOrder::conv_relu_pool_bn ? "conv_relu_pool_bn" : "conv_bn_relu_pool")
       << ";kernel=" << spec.kernel;
    return os.str();
}

ArchitectureSpec spec_from_text(const std::string& text) {
    ArchitectureSpec spec;
    bool saw_input = false, saw_filters = false, saw_dense = false, saw_dropout = false,
         saw_order = false, saw_kernel = false;
    for (const std::string& field : split(text, ';')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw ConfigError("BadSpecText: field without '=': '" + field + "'");
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "input") {
            const auto dims = split(value, 'x');
            if (dims.size() != 4) throw ConfigError("BadSpecText: input needs 4 extents");
            for (int a = 0; a < 4; ++a) spec.input_shape[a] = parse_int(dims[a]);
            saw_input = true;
        } else if (key == "filters") {
            spec.block_filters.clear();
            if (!value.empty())
                for (const auto& f : split(value, ',')) spec.block_filters.push_back(parse_int(f));
            saw_filters = true;
        } else if (key == "dense") {
            spec.dense_units = parse_int(value);
            saw_dense = true;
        } else if (key == "dropout") {
            spec.dropout_rate = parse_double(value);
            saw_dropout = true;
        } else if (key == "order") {
            if (value == "conv_relu_pool_bn")
                spec.block_order = BlockOrder::conv_relu_pool_bn;
            else if (value == "conv_bn_relu_pool")
                spec.block_order = BlockOrder::conv_bn_relu_pool;
            else
                throw ConfigError("BadSpecText: unknown block order '" + value + "'");
            saw_order = true;
        } else if (key == "kernel") {
            spec.kernel = parse_int(value);
            saw_kernel = true;
        } else {
            throw ConfigError("BadSpecText: unknown field '" + key + "'");
        }
    }
    if (!(saw_input && saw_filters && saw_dense && saw_dropout && saw_order && saw_kernel))
        throw ConfigError("BadSpecText: missing required field");
    validate_spec(spec);
    return spec;
}

} // namespace volt3d
