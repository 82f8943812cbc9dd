#include "volt3d/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "volt3d/errors.hpp"
#include "volt3d/nifti.hpp"
#include "volt3d/rng.hpp"

namespace fs = std::filesystem;

namespace volt3d {

namespace {

constexpr const char* kPhantomPrefix = "phantom:";

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const char* what) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw DataError(std::string("BadPhantomSpec: expected number for ") + what + ", got '" + s + "'");
    return v;
}

std::int64_t parse_i64(const std::string& s, const char* what) {
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw DataError(std::string("BadPhantomSpec: expected integer for ") + what + ", got '" + s + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& s, const char* what) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw DataError(std::string("BadPhantomSpec: expected integer for ") + what + ", got '" + s + "'");
    return v;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
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

double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

void check_phantom_spec(const PhantomSpec& spec) {
    for (int n : spec.grid_shape)
        if (n < 1) throw ConfigError("BadPhantomSpec: grid extents must be >= 1");
    for (double r : spec.brain_radii)
        if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("BadPhantomSpec: brain radii must be positive");
    if (!(spec.ventricle_scale > 0.0) || !std::isfinite(spec.ventricle_scale))
        throw ConfigError("BadPhantomSpec: ventricle_scale must be positive");
    if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma))
        throw ConfigError("BadPhantomSpec: noise_sigma must be finite and >= 0");
    if (spec.label != 0 && spec.label != 1) throw ConfigError("BadPhantomSpec: label must be 0 or 1");
}

struct TransformTag {
    int flip_axis = -1; // -1: no flip
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 0;
};

std::string transform_to_string(const TransformTag& t) {
    if (t.flip_axis < 0) return {};
    std::string s = "flip(axis=" + std::to_string(t.flip_axis) + ")";
    if (t.noise_sigma > 0.0)
        s += "+noise(sigma=" + fmt_double(t.noise_sigma) + ",seed=" + std::to_string(t.noise_seed) + ")";
    return s;
}

TransformTag parse_transform(const std::string& tag) {
    TransformTag t;
    if (tag.empty()) return t;
    const auto fail = [&] { throw DataError("BadTransform: cannot parse tag '" + tag + "'"); };
    std::size_t pos = 0;
    auto expect = [&](const char* lit) {
        const std::size_t n = std::string_view(lit).size();
        if (tag.compare(pos, n, lit) != 0) fail();
        pos += n;
    };
    auto until = [&](char stop) {
        const auto end = tag.find(stop, pos);
        if (end == std::string::npos) fail();
        std::string s = tag.substr(pos, end - pos);
        pos = end + 1;
        return s;
    };
    expect("flip(axis=");
    const auto axis = parse_i64(until(')'), "flip axis");
    if (axis < 0 || axis > 2) fail();
    t.flip_axis = int(axis);
    if (pos == tag.size()) return t;
    expect("+noise(sigma=");
    t.noise_sigma = parse_double(until(','), "noise sigma");
    expect("seed=");
    t.noise_seed = parse_u64(until(')'), "noise seed");
    if (pos != tag.size()) fail();
    return t;
}

} // namespace

// ---------------------------------------------------------------------------
// Phantoms.

bool is_phantom_source(const std::string& source) {
    return source.rfind(kPhantomPrefix, 0) == 0;
}

std::string phantom_to_string(const PhantomSpec& spec) {
    std::ostringstream os;
    os << kPhantomPrefix << "grid=" << spec.grid_shape[0] << 'x' << spec.grid_shape[1] << 'x'
       << spec.grid_shape[2] << ";radii=" << fmt_double(spec.brain_radii[0]) << ','
       << fmt_double(spec.brain_radii[1]) << ',' << fmt_double(spec.brain_radii[2])
       << ";vscale=" << fmt_double(spec.ventricle_scale) << ";sigma=" << fmt_double(spec.noise_sigma)
       << ";seed=" << spec.seed << ";label=" << spec.label;
    return os.str();
}

PhantomSpec phantom_from_string(const std::string& text) {
    if (!is_phantom_source(text)) throw DataError("BadPhantomSpec: missing 'phantom:' prefix: " + text);
    PhantomSpec spec;
    bool saw[6] = {};
    for (const auto& field : split_on(text.substr(std::string_view(kPhantomPrefix).size()), ';')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw DataError("BadPhantomSpec: field without '=': " + field);
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "grid") {
            const auto dims = split_on(value, 'x');
            if (dims.size() != 3) throw DataError("BadPhantomSpec: grid needs 3 extents");
            for (int a = 0; a < 3; ++a) spec.grid_shape[a] = int(parse_i64(dims[a], "grid extent"));
            saw[0] = true;
        } else if (key == "radii") {
            const auto rs = split_on(value, ',');
            if (rs.size() != 3) throw DataError("BadPhantomSpec: radii needs 3 values");
            for (int a = 0; a < 3; ++a) spec.brain_radii[a] = parse_double(rs[a], "radius");
            saw[1] = true;
        } else if (key == "vscale") {
            spec.ventricle_scale = parse_double(value, "vscale");
            saw[2] = true;
        } else if (key == "sigma") {
            spec.noise_sigma = parse_double(value, "sigma");
            saw[3] = true;
        } else if (key == "seed") {
            spec.seed = parse_u64(value, "seed");
            saw[4] = true;
        } else if (key == "label") {
            spec.label = int(parse_i64(value, "label"));
            saw[5] = true;
        } else {
            throw DataError("BadPhantomSpec: unknown field '" + key + "'");
        }
    }
    for (bool s : saw)
        if (!s) throw DataError("BadPhantomSpec: missing field in " + text);
    check_phantom_spec(spec);
    return spec;
}

Volume generate_phantom(const PhantomSpec& spec) {
    check_phantom_spec(spec);
    const auto& g = spec.grid_shape;

    auto geom = make_engine(mix_seed(spec.seed, 0xa11ce));
    std::uniform_real_distribution<double> jitter(-0.1, 0.1);

    std::array<double, 3> center, br, vr;
    for (int a = 0; a < 3; ++a) center[a] = 0.5 * (g[a] - 1) + jitter(geom) * spec.brain_radii[a];
    // Volume-preserving radii jitter: normalize the three factors so their
    // product is 1; total intensity then depends on the class alone.
    std::array<double, 3> jb, jv;
    for (int a = 0; a < 3; ++a) jb[a] = 1.0 + jitter(geom);
    for (int a = 0; a < 3; ++a) jv[a] = 1.0 + jitter(geom);
    const double nb = std::cbrt(jb[0] * jb[1] * jb[2]);
    const double nv = std::cbrt(jv[0] * jv[1] * jv[2]);
    for (int a = 0; a < 3; ++a) {
        br[a] = spec.brain_radii[a] * jb[a] / nb;
        vr[a] = br[a] * kVentricleBase * spec.ventricle_scale * jv[a] / nv;
    }
    for (int a = 0; a < 3; ++a) {
        if (center[a] - br[a] < -0.5 || center[a] + br[a] > g[a] - 0.5)
            throw DataError("RadiiTooLarge: jittered brain ellipsoid exceeds the grid on axis " +
                            std::to_string(a));
        if (vr[a] >= br[a])
            throw DataError("RadiiTooLarge: ventricle radii reach the brain envelope on axis " +
                            std::to_string(a));
    }

    Volume v({g[0], g[1], g[2]});
    v.source_id = phantom_to_string(spec);
    constexpr double kEdge = 0.15; // relative width of the smooth rim
    for (int k = 0; k < g[2]; ++k)
        for (int j = 0; j < g[1]; ++j)
            for (int i = 0; i < g[0]; ++i) {
                const double dx = (i - center[0]) / br[0];
                const double dy = (j - center[1]) / br[1];
                const double dz = (k - center[2]) / br[2];
                const double rho_b = std::sqrt(dx * dx + dy * dy + dz * dz);
                const double ex = (i - center[0]) / vr[0];
                const double ey = (j - center[1]) / vr[1];
                const double ez = (k - center[2]) / vr[2];
                const double rho_v = std::sqrt(ex * ex + ey * ey + ez * ez);
                const double wb = 1.0 - smoothstep(1.0 - kEdge, 1.0, rho_b);
                const double wv = 1.0 - smoothstep(1.0 - kEdge, 1.0, rho_v);
                v.at(i, j, k) = float(wb * (1.0 - 0.8 * wv));
            }

    if (spec.noise_sigma > 0.0) {
        auto eng = make_engine(mix_seed(spec.seed, 0x9015e));
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        for (float& x : v.data) x = float(x + noise(eng));
    }
    return v;
}

// ---------------------------------------------------------------------------
// Manifest basics.

std::vector<int> DatasetManifest::indices(Split split) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].split == split) out.push_back(int(i));
    return out;
}

std::int64_t DatasetManifest::count(Split split) const {
    return std::int64_t(indices(split).size());
}

std::int64_t DatasetManifest::count(Split split, int label) const {
    std::int64_t n = 0;
    for (const auto& r : records)
        if (r.split == split && r.label == label) ++n;
    return n;
}

DatasetManifest scan_directory(const std::string& root) {
    DatasetManifest m;
    for (Split split : {Split::train, Split::test}) {
        for (int label : {0, 1}) {
            const fs::path dir = fs::path(root) / split_name(split) / (label == 0 ? "health" : "patient");
            std::error_code ec;
            if (!fs::is_directory(dir, ec))
                throw DataError("LayoutError: missing folder " + dir.string());
            std::vector<std::string> files;
            for (const auto& entry : fs::directory_iterator(dir)) {
                if (!entry.is_regular_file()) continue;
                const std::string name = entry.path().filename().string();
                if (name.ends_with(".nii") || name.ends_with(".nii.gz"))
                    files.push_back(entry.path().string());
            }
            if (files.empty()) throw DataError("EmptyClass: no volumes under " + dir.string());
            std::sort(files.begin(), files.end());
            for (auto& f : files) m.records.push_back({std::move(f), label, split, "", ""});
        }
    }
    return m;
}

DatasetManifest apply_augmentation(const DatasetManifest& manifest, const AugmentationPolicy& policy) {
    if (policy.flip_axis < 0 || policy.flip_axis > 2)
        throw ConfigError("BadPolicy: flip_axis must be 0, 1 or 2");
    if (policy.num_augmented_per_class < 0)
        throw ConfigError("BadPolicy: num_augmented_per_class must be >= 0");
    if (!(policy.noise_sigma >= 0.0) || !std::isfinite(policy.noise_sigma))
        throw ConfigError("BadPolicy: noise_sigma must be finite and >= 0");

    DatasetManifest out = manifest;
    if (policy.num_augmented_per_class == 0) return out;

    for (int label : {0, 1}) {
        std::vector<int> sources;
        for (std::size_t i = 0; i < manifest.records.size(); ++i)
            if (manifest.records[i].split == Split::train && manifest.records[i].label == label)
                sources.push_back(int(i));
        if (sources.empty())
            throw DataError("EmptyClass: no train records with label " + std::to_string(label));
        if (policy.num_augmented_per_class > 8 * std::int64_t(sources.size()))
            throw ConfigError("BadPolicy: num_augmented_per_class exceeds 8x the class size");

        // Deal sources in seeded shuffled order; reshuffle only once the class
        // is exhausted, so repeats appear only when unavoidable.
        auto eng = make_engine(mix_seed(policy.seed, std::uint64_t(label)));
        std::vector<int> deck;
        for (int n = 0; n < policy.num_augmented_per_class; ++n) {
            if (deck.empty()) {
                deck = sources;
                std::shuffle(deck.begin(), deck.end(), eng);
            }
            const auto& src = manifest.records[std::size_t(deck.back())];
            deck.pop_back();
            TransformTag tag;
            tag.flip_axis = policy.flip_axis;
            if (policy.noise_sigma > 0.0) {
                tag.noise_sigma = policy.noise_sigma;
                tag.noise_seed = mix_seed(policy.seed, std::uint64_t(label), std::uint64_t(n));
            }
            out.records.push_back({src.source, label, Split::train, transform_to_string(tag), src.source});
        }
    }
    return out;
}

DatasetManifest make_phantom_dataset(const PhantomDatasetConfig& cfg) {
    if (cfg.train_per_class < 1) throw ConfigError("BadPhantomSpec: train_per_class must be >= 1");
    if (cfg.test_per_class < 0) throw ConfigError("BadPhantomSpec: test_per_class must be >= 0");
    std::array<double, 3> radii = cfg.brain_radii;
    if (radii == std::array<double, 3>{0, 0, 0})
        for (int a = 0; a < 3; ++a) radii[a] = 0.34375 * cfg.grid_shape[a];

    DatasetManifest m;
    std::uint64_t idx = 0;
    for (Split split : {Split::train, Split::test}) {
        const int per_class = split == Split::train ? cfg.train_per_class : cfg.test_per_class;
        for (int label : {0, 1}) {
            for (int n = 0; n < per_class; ++n, ++idx) {
                PhantomSpec spec;
                spec.grid_shape = cfg.grid_shape;
                spec.brain_radii = radii;
                spec.ventricle_scale = label == 0 ? cfg.class0_scale : cfg.class1_scale;
                spec.noise_sigma = cfg.noise_sigma;
                spec.seed = mix_seed(cfg.seed, idx);
                spec.label = label;
                check_phantom_spec(spec);
                m.records.push_back({phantom_to_string(spec), label, split, "", ""});
            }
        }
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("IoFailure: cannot open " + path + " for writing");
    for (const auto& r : manifest.records)
        os << r.source << '\t' << r.label << '\t' << split_name(r.split) << '\t' << r.transform << '\t'
           << r.augmented_from << '\n';
    if (!os) throw IoError("IoFailure: short write to " + path);
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("IoFailure: cannot open " + path);
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = split_on(line, '\t');
        if (fields.size() != 5)
            throw DataError("BadManifest: line " + std::to_string(lineno) + " has " +
                            std::to_string(fields.size()) + " fields, expected 5");
        DatasetRecord r;
        r.source = fields[0];
        if (fields[1] == "0")
            r.label = 0;
        else if (fields[1] == "1")
            r.label = 1;
        else
            throw DataError("BadManifest: line " + std::to_string(lineno) + ": label must be 0 or 1");
        if (fields[2] == "train")
            r.split = Split::train;
        else if (fields[2] == "test")
            r.split = Split::test;
        else
            throw DataError("BadManifest: line " + std::to_string(lineno) + ": unknown split '" +
                            fields[2] + "'");
        r.transform = fields[3];
        r.augmented_from = fields[4];
        parse_transform(r.transform); // validate eagerly
        m.records.push_back(std::move(r));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Batch pipeline.

std::vector<int> epoch_permutation(int count, std::uint64_t shuffle_seed, int epoch) {
    if (count < 0) throw ShapeError("ShapeMismatch: negative record count");
    std::vector<int> order(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) order[std::size_t(i)] = i;
    auto eng = make_engine(mix_seed(shuffle_seed, std::uint64_t(epoch)));
    std::shuffle(order.begin(), order.end(), eng);
    return order;
}

TensorF preprocess_record(const DatasetRecord& record, const BatchStream& stream) {
    const TransformTag tag = parse_transform(record.transform);
    Volume v = is_phantom_source(record.source) ? generate_phantom(phantom_from_string(record.source))
                                                : read_volume(record.source);
    if (tag.flip_axis >= 0) v = flip_lr(v, tag.flip_axis);
    v = stream.normalize == NormalizeKind::minmax ? normalize_intensity(v) : normalize_zscore(v);
    if (tag.noise_sigma > 0.0) v = add_gaussian_noise(v, tag.noise_sigma, tag.noise_seed);
    if (v.shape != stream.target_shape) v = resize_trilinear(v, stream.target_shape);
    return tensor_from_volume(v);
}

std::vector<Batch> make_batches(const DatasetManifest& manifest, Split split,
                                const BatchStream& stream, int epoch) {
    if (stream.batch_size < 1) throw ConfigError("BadBatchSize: batch_size must be >= 1");
    const auto idx = manifest.indices(split);
    const auto order = epoch_permutation(int(idx.size()), stream.shuffle_seed, epoch);

    std::vector<Batch> batches;
    const auto& t = stream.target_shape;
    const std::int64_t voxels = std::int64_t(t[0]) * t[1] * t[2];
    for (std::size_t start = 0; start < order.size(); start += std::size_t(stream.batch_size)) {
        const int b = int(std::min(order.size() - start, std::size_t(stream.batch_size)));
        Batch batch;
        batch.x = TensorF({b, t[0], t[1], t[2], 1});
        for (int r = 0; r < b; ++r) {
            const int rec_index = idx[std::size_t(order[start + std::size_t(r)])];
            const auto& rec = manifest.records[std::size_t(rec_index)];
            const TensorF one = preprocess_record(rec, stream);
            std::copy(one.data(), one.data() + voxels, batch.x.data() + std::int64_t(r) * voxels);
            batch.labels.push_back(rec.label);
            batch.record_indices.push_back(rec_index);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

std::vector<std::pair<std::vector<int>, std::vector<int>>>
stratified_kfold(const DatasetManifest& manifest, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("BadK: k must be >= 2");
    std::vector<std::pair<std::vector<int>, std::vector<int>>> folds(static_cast<std::size_t>(k));

    std::vector<std::vector<int>> per_fold(static_cast<std::size_t>(k));
    for (int label : {0, 1}) {
        std::vector<int> members;
        for (std::size_t i = 0; i < manifest.records.size(); ++i)
            if (manifest.records[i].split == Split::train && manifest.records[i].label == label)
                members.push_back(int(i));
        if (std::int64_t(members.size()) < k)
            throw DataError("TooFewSamples: class " + std::to_string(label) + " has " +
                            std::to_string(members.size()) + " train records, need >= " + std::to_string(k));
        auto eng = make_engine(mix_seed(seed, std::uint64_t(label)));
        std::shuffle(members.begin(), members.end(), eng);
        std::size_t pos = 0;
        const std::size_t base = members.size() / std::size_t(k);
        const std::size_t rem = members.size() % std::size_t(k);
        for (int f = 0; f < k; ++f) {
            const std::size_t take = base + (std::size_t(f) < rem ? 1 : 0);
            per_fold[std::size_t(f)].insert(per_fold[std::size_t(f)].end(), members.begin() + pos,
                                            members.begin() + pos + take);
            pos += take;
        }
    }

    const auto all_train = manifest.indices(Split::train);
    for (int f = 0; f < k; ++f) {
        auto& val = per_fold[std::size_t(f)];
        std::sort(val.begin(), val.end());
        std::vector<int> train;
        for (int i : all_train)
            if (!std::binary_search(val.begin(), val.end(), i)) train.push_back(i);
        folds[std::size_t(f)] = {std::move(train), std::move(val)};
    }
    return folds;
}

} // namespace volt3d
