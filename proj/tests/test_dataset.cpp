#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "test_support.hpp"
#include "volt3d/dataset.hpp"
#include "volt3d/nifti.hpp"

using namespace volt3d;
using namespace volt3d::test;
namespace fs = std::filesystem;

namespace {

double total_intensity(const Volume& v) {
    double s = 0;
    for (float x : v.data) s += x;
    return s;
}

PhantomSpec base_spec(std::uint64_t seed, int label, double vscale) {
    PhantomSpec s;
    s.seed = seed;
    s.label = label;
    s.ventricle_scale = vscale;
    return s;
}

// Writes a small deterministic volume so directory scans have real files.
void write_stub_volume(const fs::path& path, float fill) {
    Volume v({4, 4, 2}, fill);
    v.at(0, 0, 0) = 0.0f;
    v.at(3, 3, 1) = 1.0f;
    write_volume(path, v);
}

fs::path make_scan_tree(const std::string& name, int train_per_class, int test_per_class) {
    const fs::path root = data_dir() / name;
    fs::remove_all(root);
    int counter = 0;
    for (const char* split : {"train", "test"}) {
        const int n = std::string(split) == "train" ? train_per_class : test_per_class;
        for (const char* cls : {"health", "patient"}) {
            const fs::path dir = root / split / cls;
            fs::create_directories(dir);
            for (int i = 0; i < n; ++i) {
                const bool gz = i % 2 == 1; // mix plain and gzipped
                const std::string fname = "vol" + std::to_string(i) + (gz ? ".nii.gz" : ".nii");
                write_stub_volume(dir / fname, 0.1f * float(++counter));
            }
        }
    }
    return root;
}

} // namespace

TEST_CASE("generate_phantom is deterministic in the seed") {
    const auto spec = base_spec(42, 1, 1.6);
    const Volume a = generate_phantom(spec);
    const Volume b = generate_phantom(spec);
    CHECK(a.shape == std::array<int, 3>{32, 32, 16});
    CHECK(a.data == b.data);

    const Volume c = generate_phantom(base_spec(43, 1, 1.6));
    CHECK(a.data != c.data);

    // Values stay in [0,1] without noise; both tissue levels are present.
    float lo = 1e9f, hi = -1e9f;
    for (float x : a.data) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    CHECK(lo == 0.0f);
    CHECK(hi == 1.0f);
}

TEST_CASE("noise-free phantom classes are separable by total intensity") {
    // 50 per class; the threshold sweep oracle must reach perfect accuracy.
    std::vector<double> class0, class1;
    for (std::uint64_t s = 0; s < 50; ++s) {
        class0.push_back(total_intensity(generate_phantom(base_spec(1000 + s, 0, 1.0))));
        class1.push_back(total_intensity(generate_phantom(base_spec(2000 + s, 1, 1.6))));
    }
    // Larger cavities remove more intensity, so class 1 sits strictly below.
    const double worst0 = *std::min_element(class0.begin(), class0.end());
    const double worst1 = *std::max_element(class1.begin(), class1.end());
    CHECK(worst1 < worst0);

    // Brute-force threshold sweep: some midpoint classifies all 100 exactly.
    std::vector<double> all = class0;
    all.insert(all.end(), class1.begin(), class1.end());
    std::sort(all.begin(), all.end());
    int best = 0;
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
        const double t = 0.5 * (all[i] + all[i + 1]);
        int correct = 0;
        for (double v : class0) correct += v >= t ? 1 : 0;
        for (double v : class1) correct += v < t ? 1 : 0;
        best = std::max(best, correct);
    }
    CHECK(best == 100);

    // Mean gap, as per the ellipsoid-volume argument (first 20 seeds).
    double m0 = 0, m1 = 0;
    for (int i = 0; i < 20; ++i) {
        m0 += class0[std::size_t(i)];
        m1 += class1[std::size_t(i)];
    }
    CHECK(m1 / 20 < m0 / 20);
}

TEST_CASE("phantom rejects geometry that cannot fit") {
    auto too_big = base_spec(7, 0, 1.0);
    too_big.brain_radii = {20.0, 11.0, 5.5};
    expect_error<DataError>([&] { generate_phantom(too_big); }, "RadiiTooLarge");

    auto huge_ventricle = base_spec(7, 1, 3.1); // 0.35 * 3.1 > 1: cavity outgrows the brain
    expect_error<DataError>([&] { generate_phantom(huge_ventricle); }, "RadiiTooLarge");

    auto bad_label = base_spec(7, 0, 1.0);
    bad_label.label = 2;
    expect_error<ConfigError>([&] { generate_phantom(bad_label); }, "BadPhantomSpec");

    auto bad_sigma = base_spec(7, 0, 1.0);
    bad_sigma.noise_sigma = -0.5;
    expect_error<ConfigError>([&] { generate_phantom(bad_sigma); }, "BadPhantomSpec");

    auto bad_scale = base_spec(7, 0, 1.0);
    bad_scale.ventricle_scale = 0.0;
    expect_error<ConfigError>([&] { generate_phantom(bad_scale); }, "BadPhantomSpec");
}

TEST_CASE("phantom noise is seeded and additive") {
    auto spec = base_spec(11, 0, 1.0);
    const Volume clean = generate_phantom(spec);
    spec.noise_sigma = 0.05;
    const Volume noisy1 = generate_phantom(spec);
    const Volume noisy2 = generate_phantom(spec);
    CHECK(noisy1.data == noisy2.data);
    CHECK(noisy1.data != clean.data);
    // Noise does not disturb the geometry draws.
    double diff = 0;
    for (std::size_t i = 0; i < clean.data.size(); ++i)
        diff = std::max(diff, double(std::abs(noisy1.data[i] - clean.data[i])));
    CHECK(diff < 0.05 * 6); // six sigma
}

TEST_CASE("phantom specs round-trip through their text form") {
    PhantomSpec s;
    s.grid_shape = {16, 16, 8};
    s.brain_radii = {5.5, 5.25, 2.75};
    s.ventricle_scale = 1.6;
    s.noise_sigma = 0.01;
    s.seed = 123456789;
    s.label = 1;
    const std::string text = phantom_to_string(s);
    CHECK(is_phantom_source(text));
    CHECK(phantom_from_string(text) == s);
    CHECK(phantom_to_string(phantom_from_string(text)) == text);

    expect_error<DataError>([] { phantom_from_string("grid=2x2x2"); }, "BadPhantomSpec");
    expect_error<DataError>([] { phantom_from_string("phantom:grid=2x2"); }, "BadPhantomSpec");
    expect_error<DataError>([] { phantom_from_string("phantom:grid=4x4x4;radii=1,1,1"); }, "BadPhantomSpec");
    expect_error<DataError>(
        [] { phantom_from_string("phantom:grid=4x4x4;radii=1,1,1;vscale=1;sigma=0;seed=0;label=0;x=9"); },
        "BadPhantomSpec");
}

TEST_CASE("scan_directory walks the train/test x health/patient layout") {
    const fs::path root = make_scan_tree("scan_full", 9, 5);
    const auto m = scan_directory(root.string());

    CHECK(m.records.size() == 28);
    CHECK(m.count(Split::train) == 18);
    CHECK(m.count(Split::test) == 10);
    CHECK(m.count(Split::train, 0) == 9);
    CHECK(m.count(Split::train, 1) == 9);
    CHECK(m.count(Split::test, 0) == 5);
    CHECK(m.count(Split::test, 1) == 5);

    // Lexicographic within each folder; folders in a fixed order.
    CHECK(m.records[0].source.find("train") != std::string::npos);
    CHECK(m.records[0].source.find("health") != std::string::npos);
    CHECK(m.records[0].label == 0);
    for (std::size_t i = 1; i < 9; ++i) {
        CHECK(m.records[i].label == 0);
        CHECK(m.records[i].split == Split::train);
        CHECK(m.records[i - 1].source < m.records[i].source);
    }
    CHECK(m.records[9].label == 1);
    for (const auto& r : m.records) {
        CHECK(r.transform.empty());
        CHECK(r.augmented_from.empty());
    }

    // Pure function of the tree.
    CHECK(scan_directory(root.string()) == m);

    // Files with other extensions are ignored.
    std::ofstream(root / "train" / "health" / "notes.txt") << "not a volume";
    CHECK(scan_directory(root.string()).records.size() == 28);
}

TEST_CASE("scan_directory reports layout problems") {
    const fs::path root = make_scan_tree("scan_broken", 2, 1);
    fs::remove_all(root / "test" / "patient");
    expect_error<DataError>([&] { scan_directory(root.string()); }, "LayoutError");

    const fs::path root2 = make_scan_tree("scan_empty", 2, 1);
    for (const auto& e : fs::directory_iterator(root2 / "train" / "patient")) fs::remove(e.path());
    expect_error<DataError>([&] { scan_directory(root2.string()); }, "EmptyClass");

    expect_error<DataError>([&] { scan_directory((data_dir() / "no_such_root").string()); }, "LayoutError");
}

TEST_CASE("apply_augmentation adds exactly the requested train records") {
    PhantomDatasetConfig cfg;
    cfg.seed = 5;
    const auto m = make_phantom_dataset(cfg); // 9+9 train, 5+5 test

    AugmentationPolicy policy;
    policy.num_augmented_per_class = 7;
    policy.seed = 31;
    const auto aug = apply_augmentation(m, policy);

    CHECK(aug.count(Split::train, 0) == 16);
    CHECK(aug.count(Split::train, 1) == 16);
    CHECK(aug.count(Split::train) == 32);
    CHECK(aug.count(Split::test) == 10);

    // Originals survive unchanged, in order, as a prefix.
    REQUIRE(aug.records.size() == m.records.size() + 14);
    for (std::size_t i = 0; i < m.records.size(); ++i) CHECK(aug.records[i] == m.records[i]);

    std::set<std::string> sources0;
    for (std::size_t i = m.records.size(); i < aug.records.size(); ++i) {
        const auto& r = aug.records[i];
        CHECK(r.split == Split::train);
        CHECK(r.transform.rfind("flip(axis=1)", 0) == 0);
        CHECK(r.transform.find("noise") == std::string::npos); // sigma 0: flip only
        CHECK(!r.augmented_from.empty());
        CHECK(r.augmented_from == r.source);
        if (r.label == 0) sources0.insert(r.source);
    }
    // 7 <= 9 sources: sampled without replacement, so all distinct.
    CHECK(sources0.size() == 7);

    CHECK(apply_augmentation(m, policy) == aug);

    AugmentationPolicy identity;
    identity.num_augmented_per_class = 0;
    CHECK(apply_augmentation(m, identity) == m);
}

TEST_CASE("augmentation resamples only once a class is exhausted") {
    PhantomDatasetConfig cfg;
    cfg.seed = 6;
    const auto m = make_phantom_dataset(cfg);

    AugmentationPolicy policy;
    policy.num_augmented_per_class = 12; // 9 sources: 3 must repeat
    policy.seed = 77;
    const auto aug = apply_augmentation(m, policy);
    CHECK(aug.count(Split::train, 0) == 21);

    std::map<std::string, int> uses;
    for (std::size_t i = m.records.size(); i < aug.records.size(); ++i)
        if (aug.records[i].label == 0) uses[aug.records[i].source]++;
    CHECK(uses.size() == 9); // every source used at least once
    for (const auto& [src, n] : uses) {
        CHECK(n >= 1);
        CHECK(n <= 2);
    }
}

TEST_CASE("augmentation with noise tags per-record seeds") {
    PhantomDatasetConfig cfg;
    cfg.seed = 8;
    const auto m = make_phantom_dataset(cfg);

    AugmentationPolicy policy;
    policy.num_augmented_per_class = 3;
    policy.noise_sigma = 0.02;
    policy.seed = 13;
    const auto aug = apply_augmentation(m, policy);

    std::set<std::string> tags;
    for (std::size_t i = m.records.size(); i < aug.records.size(); ++i) {
        const auto& r = aug.records[i];
        CHECK(r.transform.find("+noise(sigma=0.02,seed=") != std::string::npos);
        tags.insert(r.transform);
    }
    CHECK(tags.size() == 6); // distinct noise seeds per augmented record
}

TEST_CASE("augmentation rejects invalid policies") {
    PhantomDatasetConfig cfg;
    const auto m = make_phantom_dataset(cfg);

    AugmentationPolicy p1;
    p1.flip_axis = 3;
    expect_error<ConfigError>([&] { apply_augmentation(m, p1); }, "BadPolicy");

    AugmentationPolicy p2;
    p2.num_augmented_per_class = -1;
    expect_error<ConfigError>([&] { apply_augmentation(m, p2); }, "BadPolicy");

    AugmentationPolicy p3;
    p3.num_augmented_per_class = 9 * 8 + 1;
    expect_error<ConfigError>([&] { apply_augmentation(m, p3); }, "BadPolicy");

    AugmentationPolicy p4;
    p4.noise_sigma = -0.1;
    expect_error<ConfigError>([&] { apply_augmentation(m, p4); }, "BadPolicy");

    DatasetManifest one_class;
    one_class.records.push_back({"phantom:grid=4x4x4;radii=1,1,1;vscale=1;sigma=0;seed=0;label=0", 0,
                                 Split::train, "", ""});
    AugmentationPolicy p5;
    p5.num_augmented_per_class = 1;
    expect_error<DataError>([&] { apply_augmentation(one_class, p5); }, "EmptyClass");
}

TEST_CASE("manifests round-trip through the text format") {
    PhantomDatasetConfig cfg;
    cfg.seed = 21;
    cfg.noise_sigma = 0.01;
    AugmentationPolicy policy;
    policy.num_augmented_per_class = 4;
    policy.noise_sigma = 0.02;
    policy.seed = 3;
    const auto m = apply_augmentation(make_phantom_dataset(cfg), policy);

    const std::string path = (data_dir() / "manifest.tsv").string();
    save_manifest(m, path);
    CHECK(load_manifest(path) == m);

    // Re-saving the loaded manifest is byte-identical.
    const std::string path2 = (data_dir() / "manifest2.tsv").string();
    save_manifest(load_manifest(path), path2);
    std::ifstream a(path), b(path2);
    const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}

TEST_CASE("manifest loader rejects malformed lines") {
    auto write_lines = [&](const std::string& name, const std::string& content) {
        const std::string p = (data_dir() / name).string();
        std::ofstream(p) << content;
        return p;
    };
    expect_error<DataError>(
        [&] { load_manifest(write_lines("bad1.tsv", "a\t2\ttrain\t\t\n")); }, "BadManifest");
    expect_error<DataError>([&] { load_manifest(write_lines("bad2.tsv", "a\t1\ttrain\n")); },
                            "BadManifest");
    expect_error<DataError>(
        [&] { load_manifest(write_lines("bad3.tsv", "a\t1\tvalid\t\t\n")); }, "BadManifest");
    expect_error<DataError>(
        [&] { load_manifest(write_lines("bad4.tsv", "a\t1\ttrain\tspin(x=2)\t\n")); }, "BadTransform");
    expect_error<IoError>([&] { load_manifest((data_dir() / "missing.tsv").string()); }, "IoFailure");
}

TEST_CASE("epoch permutations are seeded and cover every index") {
    const auto p0 = epoch_permutation(32, 9, 0);
    CHECK(epoch_permutation(32, 9, 0) == p0);
    const auto p1 = epoch_permutation(32, 9, 1);
    CHECK(p0 != p1);

    auto sorted = p0;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 32; ++i) CHECK(sorted[std::size_t(i)] == i);
}

TEST_CASE("preprocess_record applies flip and noise exactly as tagged") {
    PhantomSpec spec = base_spec(33, 1, 1.6);
    BatchStream stream;
    stream.target_shape = {32, 32, 16};

    DatasetRecord plain{phantom_to_string(spec), 1, Split::train, "", ""};
    const TensorF base = preprocess_record(plain, stream);
    CHECK(base.shape() == std::vector<int>{32, 32, 16, 1});
    // min-max normalized
    float lo = 1e9f, hi = -1e9f;
    for (std::int64_t i = 0; i < base.size(); ++i) {
        lo = std::min(lo, base[i]);
        hi = std::max(hi, base[i]);
    }
    CHECK(lo == 0.0f);
    CHECK(hi == 1.0f);

    DatasetRecord flipped = plain;
    flipped.transform = "flip(axis=1)";
    flipped.augmented_from = plain.source;
    const TensorF f = preprocess_record(flipped, stream);
    const TensorF manual = tensor_from_volume(normalize_intensity(flip_lr(generate_phantom(spec), 1)));
    REQUIRE(f.same_shape(manual));
    for (std::int64_t i = 0; i < f.size(); ++i) REQUIRE(f[i] == manual[i]);

    DatasetRecord noisy = flipped;
    noisy.transform = "flip(axis=1)+noise(sigma=0.05,seed=99)";
    const TensorF n = preprocess_record(noisy, stream);
    const TensorF manual_n = tensor_from_volume(
        add_gaussian_noise(normalize_intensity(flip_lr(generate_phantom(spec), 1)), 0.05, 99));
    for (std::int64_t i = 0; i < n.size(); ++i) REQUIRE(n[i] == manual_n[i]);

    // Resize engages when the target differs from the source grid.
    BatchStream small = stream;
    small.target_shape = {16, 16, 8};
    CHECK(preprocess_record(plain, small).shape() == std::vector<int>{16, 16, 8, 1});
}

TEST_CASE("make_batches: 32 train records at batch size 2 give 16 full batches") {
    PhantomDatasetConfig cfg;
    cfg.seed = 41;
    AugmentationPolicy policy;
    policy.num_augmented_per_class = 7;
    policy.seed = 42;
    const auto m = apply_augmentation(make_phantom_dataset(cfg), policy);
    REQUIRE(m.count(Split::train) == 32);

    BatchStream stream;
    stream.batch_size = 2;
    stream.shuffle_seed = 17;
    stream.target_shape = {32, 32, 16};

    const auto batches = make_batches(m, Split::train, stream, 0);
    REQUIRE(batches.size() == 16);
    std::vector<int> seen;
    for (const auto& b : batches) {
        CHECK(b.x.shape() == std::vector<int>{2, 32, 32, 16, 1});
        REQUIRE(b.labels.size() == 2);
        REQUIRE(b.record_indices.size() == 2);
        for (std::size_t i = 0; i < b.record_indices.size(); ++i) {
            CHECK(m.records[std::size_t(b.record_indices[i])].label == b.labels[i]);
            seen.push_back(b.record_indices[i]);
        }
    }
    // Each train record exactly once per epoch.
    std::sort(seen.begin(), seen.end());
    CHECK(seen == m.indices(Split::train));
}

TEST_CASE("make_batches replays an epoch exactly and reshuffles across epochs") {
    PhantomDatasetConfig cfg;
    cfg.seed = 43;
    cfg.train_per_class = 5;
    cfg.test_per_class = 5;
    const auto m = make_phantom_dataset(cfg);

    BatchStream stream;
    stream.batch_size = 2;
    stream.shuffle_seed = 23;
    stream.target_shape = {32, 32, 16};

    const auto e0a = make_batches(m, Split::train, stream, 0);
    const auto e0b = make_batches(m, Split::train, stream, 0);
    const auto e1 = make_batches(m, Split::train, stream, 1);

    REQUIRE(e0a.size() == e0b.size());
    bool identical = true;
    for (std::size_t i = 0; i < e0a.size(); ++i) {
        if (e0a[i].record_indices != e0b[i].record_indices) identical = false;
        for (std::int64_t j = 0; j < e0a[i].x.size(); ++j)
            if (e0a[i].x[j] != e0b[i].x[j]) identical = false;
    }
    CHECK(identical);

    std::vector<int> order0, order1;
    for (const auto& b : e0a) order0.insert(order0.end(), b.record_indices.begin(), b.record_indices.end());
    for (const auto& b : e1) order1.insert(order1.end(), b.record_indices.begin(), b.record_indices.end());
    CHECK(order0 != order1);

    // Short final batch: 10 test records at batch size 4 -> 4, 4, 2.
    BatchStream four = stream;
    four.batch_size = 4;
    const auto tb = make_batches(m, Split::test, four, 0);
    REQUIRE(tb.size() == 3);
    CHECK(tb[0].labels.size() == 4);
    CHECK(tb[1].labels.size() == 4);
    CHECK(tb[2].labels.size() == 2);
    CHECK(tb[2].x.dim(0) == 2);

    BatchStream bad = stream;
    bad.batch_size = 0;
    expect_error<ConfigError>([&] { make_batches(m, Split::train, bad, 0); }, "BadBatchSize");
}

TEST_CASE("stratified_kfold partitions each class evenly") {
    PhantomDatasetConfig cfg;
    cfg.seed = 51;
    AugmentationPolicy policy;
    policy.num_augmented_per_class = 7;
    policy.seed = 52;
    const auto m = apply_augmentation(make_phantom_dataset(cfg), policy); // 16+16 train

    SUBCASE("k=4 divides exactly") {
        const auto folds = stratified_kfold(m, 4, 60);
        REQUIRE(folds.size() == 4);
        std::vector<int> all_val;
        for (const auto& [train, val] : folds) {
            CHECK(val.size() == 8);
            CHECK(train.size() == 24);
            int c0 = 0, c1 = 0;
            for (int i : val) (m.records[std::size_t(i)].label == 0 ? c0 : c1)++;
            CHECK(c0 == 4);
            CHECK(c1 == 4);
            // train and val are disjoint and cover the split
            std::vector<int> both = train;
            both.insert(both.end(), val.begin(), val.end());
            std::sort(both.begin(), both.end());
            CHECK(both == m.indices(Split::train));
            all_val.insert(all_val.end(), val.begin(), val.end());
        }
        std::sort(all_val.begin(), all_val.end());
        CHECK(all_val == m.indices(Split::train)); // folds disjoint, union = everything

        CHECK(stratified_kfold(m, 4, 60) == folds);
        CHECK(stratified_kfold(m, 4, 61) != folds);
    }

    SUBCASE("k=3 balances the remainder") {
        const auto folds = stratified_kfold(m, 3, 70);
        std::multiset<int> sizes0, sizes1;
        for (const auto& [train, val] : folds) {
            int c0 = 0, c1 = 0;
            for (int i : val) (m.records[std::size_t(i)].label == 0 ? c0 : c1)++;
            sizes0.insert(c0);
            sizes1.insert(c1);
        }
        CHECK(sizes0 == std::multiset<int>{5, 5, 6});
        CHECK(sizes1 == std::multiset<int>{5, 5, 6});
    }

    SUBCASE("errors") {
        expect_error<ConfigError>([&] { stratified_kfold(m, 1, 0); }, "BadK");
        PhantomDatasetConfig small;
        small.train_per_class = 4;
        expect_error<DataError>([&] { stratified_kfold(make_phantom_dataset(small), 5, 0); },
                                "TooFewSamples");
    }
}

TEST_CASE("make_phantom_dataset lays out counts, labels and distinct seeds") {
    PhantomDatasetConfig cfg;
    cfg.seed = 90;
    cfg.train_per_class = 3;
    cfg.test_per_class = 2;
    const auto m = make_phantom_dataset(cfg);
    REQUIRE(m.records.size() == 10);
    CHECK(m.count(Split::train, 0) == 3);
    CHECK(m.count(Split::train, 1) == 3);
    CHECK(m.count(Split::test, 0) == 2);
    CHECK(m.count(Split::test, 1) == 2);

    std::set<std::uint64_t> seeds;
    for (const auto& r : m.records) {
        const auto spec = phantom_from_string(r.source);
        CHECK(spec.label == r.label);
        CHECK(spec.ventricle_scale == (r.label == 0 ? 1.0 : 1.6));
        seeds.insert(spec.seed);
    }
    CHECK(seeds.size() == 10);

    CHECK(make_phantom_dataset(cfg) == m);
}
