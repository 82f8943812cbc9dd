#include "volt3d/config.hpp"

#include <charconv>
#include <fstream>

#include "volt3d/errors.hpp"
#include "volt3d/rng.hpp"

namespace volt3d {

namespace {

constexpr std::uint64_t kSaltAugPolicy = 0x61756721;

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = first + value.size();
    std::from_chars_result res;
    if constexpr (std::is_floating_point_v<T>)
        res = std::from_chars(first, last, out);
    else
        res = std::from_chars(first, last, out, 10);
    if (res.ec != std::errc{} || res.ptr != last)
        throw ConfigError("BadValue: key '" + key + "' cannot parse '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("BadValue: key '" + key + "' wants true/false, got '" + value + "'");
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

template <int N>
std::array<int, N> parse_grid(const std::string& key, const std::string& value) {
    auto parts = split_on(value, 'x');
    std::array<int, N> out{};
    if (parts.size() != N)
        throw ConfigError("BadValue: key '" + key + "' wants " + std::to_string(N) +
                          " x-separated extents, got '" + value + "'");
    for (int i = 0; i < N; ++i) out[std::size_t(i)] = parse_num<int>(key, parts[std::size_t(i)]);
    return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    if (value.empty()) return out;
    for (const auto& part : split_on(value, ',')) out.push_back(parse_num<int>(key, part));
    return out;
}

} // namespace

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "data.root") {
        cfg.data_root = value;
    } else if (key == "data.normalize") {
        if (value == "minmax")
            cfg.normalize = NormalizeKind::minmax;
        else if (value == "zscore")
            cfg.normalize = NormalizeKind::zscore;
        else
            throw ConfigError("BadValue: key 'data.normalize' wants minmax|zscore, got '" + value +
                              "'");
    } else if (key == "data.phantom.grid") {
        cfg.phantom.grid_shape = parse_grid<3>(key, value);
    } else if (key == "data.phantom.train_per_class") {
        cfg.phantom.train_per_class = parse_num<int>(key, value);
    } else if (key == "data.phantom.test_per_class") {
        cfg.phantom.test_per_class = parse_num<int>(key, value);
    } else if (key == "data.phantom.seed") {
        cfg.phantom.seed = parse_num<std::uint64_t>(key, value);
    } else if (key == "data.phantom.noise_sigma") {
        cfg.phantom.noise_sigma = parse_num<double>(key, value);
    } else if (key == "data.phantom.class0_scale") {
        cfg.phantom.class0_scale = parse_num<double>(key, value);
    } else if (key == "data.phantom.class1_scale") {
        cfg.phantom.class1_scale = parse_num<double>(key, value);
    } else if (key == "model.input_shape") {
        auto parts = split_on(value, 'x');
        if (parts.size() == 3) {
            auto g = parse_grid<3>(key, value);
            cfg.arch.input_shape = {g[0], g[1], g[2], 1};
        } else {
            cfg.arch.input_shape = parse_grid<4>(key, value);
        }
    } else if (key == "model.filters") {
        cfg.arch.block_filters = parse_int_list(key, value);
    } else if (key == "model.dense_units") {
        cfg.arch.dense_units = parse_num<int>(key, value);
    } else if (key == "model.dropout") {
        cfg.arch.dropout_rate = parse_num<double>(key, value);
    } else if (key == "model.kernel") {
        cfg.arch.kernel = parse_num<int>(key, value);
    } else if (key == "model.block_order") {
        if (value == "conv_relu_pool_bn")
            cfg.arch.block_order = BlockOrder::conv_relu_pool_bn;
        else if (value == "conv_bn_relu_pool")
            cfg.arch.block_order = BlockOrder::conv_bn_relu_pool;
        else
            throw ConfigError("BadValue: key 'model.block_order' got '" + value + "'");
    } else if (key == "train.epochs") {
        cfg.train.epochs = parse_num<int>(key, value);
    } else if (key == "train.batch_size") {
        cfg.train.batch_size = parse_num<int>(key, value);
    } else if (key == "train.lr") {
        cfg.train.lr = parse_num<double>(key, value);
    } else if (key == "train.seed") {
        cfg.train.seed = parse_num<std::uint64_t>(key, value);
    } else if (key == "train.noise_sigma") {
        cfg.train.noise_sigma = parse_num<double>(key, value);
    } else if (key == "train.validation") {
        if (value == "none") {
            cfg.train.validation.kind = ValidationKind::none;
        } else if (value == "holdout") {
            cfg.train.validation.kind = ValidationKind::holdout;
        } else if (value.rfind("holdout:", 0) == 0) {
            cfg.train.validation.kind = ValidationKind::holdout;
            cfg.train.validation.holdout_fraction = parse_num<double>(key, value.substr(8));
        } else {
            throw ConfigError("BadValue: key 'train.validation' wants none|holdout[:F], got '" +
                              value + "'");
        }
    } else if (key == "augment.enabled") {
        cfg.augment_enabled = parse_bool(key, value);
    } else if (key == "augment.count") {
        cfg.augment.num_augmented_per_class = parse_num<int>(key, value);
    } else if (key == "augment.noise_sigma") {
        cfg.augment.noise_sigma = parse_num<double>(key, value);
    } else if (key == "augment.flip_axis") {
        cfg.augment.flip_axis = parse_num<int>(key, value);
    } else if (key == "eval.threshold") {
        cfg.eval_threshold = parse_num<double>(key, value);
    } else if (key == "eval.checkpoint") {
        cfg.eval_checkpoint = value;
    } else if (key == "eval.split") {
        if (value != "train" && value != "test")
            throw ConfigError("BadValue: key 'eval.split' wants train|test, got '" + value + "'");
        cfg.eval_split = value;
    } else if (key == "out.dir") {
        cfg.out_dir = value;
    } else if (key == "ab.seeds") {
        cfg.ab_seeds = parse_num<int>(key, value);
    } else if (key == "ab.epochs_baseline") {
        cfg.ab_epochs_baseline = parse_num<int>(key, value);
    } else if (key == "ab.epochs_augmented") {
        cfg.ab_epochs_augmented = parse_num<int>(key, value);
    } else if (key == "run.threads") {
        cfg.threads = parse_num<int>(key, value);
    } else {
        throw ConfigError("UnknownKey: '" + key + "'");
    }
}

RunConfig load_config(const std::optional<std::string>& file,
                      const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw IoError("IoFailure: cannot open config " + *file);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("BadConfigLine: " + *file + ":" + std::to_string(lineno) +
                                  " is not key=value");
            apply_kv(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
    }
    for (const auto& ov : overrides) {
        std::size_t eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("BadOverride: '" + ov + "' is not key=value");
        apply_kv(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
    }
    return cfg;
}

TrainConfig effective_train_config(const RunConfig& cfg) {
    TrainConfig tc = cfg.train;
    tc.normalize = cfg.normalize;
    if (cfg.augment_enabled) {
        AugmentationPolicy policy = cfg.augment;
        policy.seed = mix_seed(tc.seed, kSaltAugPolicy);
        tc.augmentation = policy;
    }
    return tc;
}

} // namespace volt3d
