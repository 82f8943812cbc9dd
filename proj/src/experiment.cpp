#include "volt3d/experiment.hpp"

#include <cstdio>
#include <fstream>

#include "volt3d/errors.hpp"
#include "volt3d/rng.hpp"

namespace volt3d {

namespace {

constexpr std::uint64_t kSaltData = 0xab00d474;
constexpr std::uint64_t kSaltInit = 0xab001417;
constexpr std::uint64_t kSaltTrain = 0xab007125;
constexpr std::uint64_t kSaltAug = 0xab000a96;

} // namespace

AbRow ab_run_seed(const AbConfig& cfg, int replicate) {
    const auto rep = std::uint64_t(replicate);
    PhantomDatasetConfig data = cfg.data;
    data.seed = mix_seed(cfg.base_seed, kSaltData, rep);
    const DatasetManifest manifest = make_phantom_dataset(data);

    TrainConfig base;
    base.epochs = cfg.epochs_baseline;
    base.batch_size = cfg.batch_size;
    base.lr = cfg.lr;
    base.seed = mix_seed(cfg.base_seed, kSaltTrain, rep);
    base.normalize = cfg.normalize;

    TrainConfig aug = base;
    aug.epochs = cfg.epochs_augmented;
    AugmentationPolicy policy = cfg.augment;
    policy.seed = mix_seed(cfg.base_seed, kSaltAug, rep);
    aug.augmentation = policy;

    const std::uint64_t init_seed = mix_seed(cfg.base_seed, kSaltInit, rep);

    AbRow row;
    row.seed = replicate;

    ModelF baseline_model = build_model<float>(cfg.arch, init_seed);
    train(baseline_model, manifest, base);
    MetricsReport rb = evaluate(baseline_model, manifest, Split::test, 0.5, cfg.normalize);
    row.baseline_accuracy = rb.accuracy;
    row.baseline_auc = rb.auc;

    ModelF augmented_model = build_model<float>(cfg.arch, init_seed);
    train(augmented_model, manifest, aug);
    MetricsReport ra = evaluate(augmented_model, manifest, Split::test, 0.5, cfg.normalize);
    row.augmented_accuracy = ra.accuracy;
    row.augmented_auc = ra.auc;
    return row;
}

AbResult ab_experiment(const AbConfig& cfg, const std::function<void(const AbRow&)>& progress) {
    if (cfg.num_seeds < 2)
        throw ConfigError("BadConfig: ab experiment needs at least two seeds");
    AbResult result;
    for (int i = 0; i < cfg.num_seeds; ++i) {
        result.rows.push_back(ab_run_seed(cfg, i));
        if (progress) progress(result.rows.back());
    }
    const double n = double(result.rows.size());
    for (const AbRow& r : result.rows) {
        result.mean.baseline_accuracy += r.baseline_accuracy / n;
        result.mean.baseline_auc += r.baseline_auc / n;
        result.mean.augmented_accuracy += r.augmented_accuracy / n;
        result.mean.augmented_auc += r.augmented_auc / n;
    }
    result.mean.delta_accuracy = result.mean.augmented_accuracy - result.mean.baseline_accuracy;
    result.mean.delta_auc = result.mean.augmented_auc - result.mean.baseline_auc;
    return result;
}

void write_ab_csv(const AbResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("IoFailure: cannot open " + path);
    out << "seed,baseline_accuracy,baseline_auc,augmented_accuracy,augmented_auc,"
           "delta_accuracy,delta_auc\n";
    char line[256];
    for (const AbRow& r : result.rows) {
        std::snprintf(line, sizeof line, "%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", r.seed,
                      r.baseline_accuracy, r.baseline_auc, r.augmented_accuracy, r.augmented_auc,
                      r.delta_accuracy(), r.delta_auc());
        out << line;
    }
    const AbSummary& m = result.mean;
    std::snprintf(line, sizeof line, "mean,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", m.baseline_accuracy,
                  m.baseline_auc, m.augmented_accuracy, m.augmented_auc, m.delta_accuracy,
                  m.delta_auc);
    out << line;
    out.flush();
    if (!out.good()) throw IoError("IoFailure: cannot write " + path);
}

} // namespace volt3d
