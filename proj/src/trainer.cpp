#include "volt3d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "volt3d/layers.hpp"
#include "volt3d/rng.hpp"

namespace volt3d {

namespace {

// Salts separating the independent RNG streams a run derives from cfg.seed.
constexpr std::uint64_t kSaltHoldout = 0x686f6c64;
constexpr std::uint64_t kSaltShuffle = 0x73687566;
constexpr std::uint64_t kSaltNoise = 0x6e6f6973;
constexpr std::uint64_t kSaltDropout = 0x64726f70;
constexpr std::uint64_t kSaltInit = 0x696e6974;
constexpr std::uint64_t kSaltFold = 0x666f6c64;
constexpr std::uint64_t kSaltAug = 0x61756721;

DatasetManifest subset(const DatasetManifest& m, const std::vector<int>& idx) {
    DatasetManifest out;
    out.records.reserve(idx.size());
    for (int i : idx) out.records.push_back(m.records[std::size_t(i)]);
    return out;
}

void check_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ConfigError("BadConfig: epochs must be >= 1");
    if (cfg.batch_size < 2)
        throw ConfigError("BadBatchSize: train batch size must be >= 2 (batch statistics)");
    if (!(cfg.lr > 0) || !std::isfinite(cfg.lr))
        throw ConfigError("BadConfig: lr must be finite and positive");
    if (!(cfg.noise_sigma >= 0) || !std::isfinite(cfg.noise_sigma))
        throw ConfigError("BadConfig: noise_sigma must be finite and >= 0");
    if (cfg.validation.kind == ValidationKind::holdout &&
        !(cfg.validation.holdout_fraction > 0 && cfg.validation.holdout_fraction < 1))
        throw ConfigError("BadConfig: holdout fraction must lie in (0,1)");
}

struct SplitStats {
    double loss = 0;
    double accuracy = 0;
};

// Inference pass over every record of `split`, mean loss + accuracy at 0.5.
SplitStats infer_stats(ModelF& model, const DatasetManifest& m, Split split,
                       const BatchStream& stream) {
    double loss_sum = 0;
    std::int64_t correct = 0, seen = 0;
    for (auto& batch : make_batches(m, split, stream, 0)) {
        TensorF p = model_forward(model, batch.x, LayerMode::infer, 0);
        auto bce = bce_loss(p, batch.labels);
        const auto bsz = std::int64_t(batch.labels.size());
        loss_sum += double(bce.loss) * double(bsz);
        for (std::int64_t i = 0; i < bsz; ++i)
            correct += ((p[i] >= 0.5f) == (batch.labels[std::size_t(i)] == 1)) ? 1 : 0;
        seen += bsz;
    }
    return {loss_sum / double(seen), double(correct) / double(seen)};
}

} // namespace

TrainConfig baseline_regime(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.seed = seed;
    return cfg;
}

TrainConfig augmented_regime(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 80;
    cfg.seed = seed;
    AugmentationPolicy policy;
    policy.seed = mix_seed(seed, kSaltAug);
    cfg.augmentation = policy;
    return cfg;
}

std::pair<DatasetManifest, DatasetManifest>
stratified_holdout(const DatasetManifest& manifest, double fraction, std::uint64_t seed) {
    if (!(fraction > 0 && fraction < 1))
        throw ConfigError("BadConfig: holdout fraction must lie in (0,1)");
    std::vector<int> train_idx, val_idx;
    for (int label = 0; label < 2; ++label) {
        std::vector<int> members;
        for (int i : manifest.indices(Split::train))
            if (manifest.records[std::size_t(i)].label == label) members.push_back(i);
        if (members.empty())
            throw DataError("EmptyClass: no train records with label " + std::to_string(label));
        auto eng = make_engine(mix_seed(seed, kSaltHoldout, std::uint64_t(label)));
        std::shuffle(members.begin(), members.end(), eng);
        const auto n = std::int64_t(members.size());
        const auto n_val = std::max<std::int64_t>(1, std::llround(fraction * double(n)));
        if (n_val >= n)
            throw DataError("TooFewSamples: holdout leaves label " + std::to_string(label) +
                            " without train records");
        val_idx.insert(val_idx.end(), members.begin(), members.begin() + n_val);
        train_idx.insert(train_idx.end(), members.begin() + n_val, members.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    return {subset(manifest, train_idx), subset(manifest, val_idx)};
}

std::vector<EpochRecord> train(ModelF& model, const DatasetManifest& manifest,
                               const TrainConfig& cfg) {
    check_config(cfg);

    DatasetManifest train_m, val_m;
    if (cfg.validation.kind == ValidationKind::holdout) {
        std::tie(train_m, val_m) =
            stratified_holdout(manifest, cfg.validation.holdout_fraction, cfg.seed);
    } else {
        train_m = subset(manifest, manifest.indices(Split::train));
    }
    // Augment after the split so no validation source leaks a flipped copy.
    if (cfg.augmentation) train_m = apply_augmentation(train_m, *cfg.augmentation);
    if (cfg.log) {
        cfg.log("train records: " + std::to_string(train_m.records.size()));
        if (!val_m.records.empty())
            cfg.log("validation records: " + std::to_string(val_m.records.size()));
    }

    const auto& in = model.spec.input_shape;
    BatchStream stream;
    stream.batch_size = cfg.batch_size;
    stream.shuffle_seed = mix_seed(cfg.seed, kSaltShuffle);
    stream.target_shape = {in[0], in[1], in[2]};
    stream.normalize = cfg.normalize;

    auto params = trainable_params(model);
    AdamState<float> adam;
    adam.lr = cfg.lr;

    std::vector<EpochRecord> records;
    records.reserve(std::size_t(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0;
        std::int64_t correct = 0, seen = 0;
        auto batches = make_batches(train_m, Split::train, stream, epoch);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            Batch& batch = batches[b];
            const auto bsz = std::int64_t(batch.labels.size());
            if (bsz < 2) continue; // trailing singleton: batch statistics undefined
            if (cfg.noise_sigma > 0) {
                auto eng = make_engine(mix_seed(cfg.seed, kSaltNoise,
                                                (std::uint64_t(epoch) << 32) | std::uint64_t(b)));
                std::normal_distribution<double> dist(0.0, cfg.noise_sigma);
                for (std::int64_t i = 0; i < batch.x.size(); ++i)
                    batch.x[i] += float(dist(eng));
            }
            const std::uint64_t drop_seed =
                mix_seed(cfg.seed, kSaltDropout, (std::uint64_t(epoch) << 32) | std::uint64_t(b));
            ForwardTape<float> tape;
            TensorF p = model_forward(model, batch.x, LayerMode::train, drop_seed, &tape);
            auto bce = bce_loss(p, batch.labels);
            if (!std::isfinite(double(bce.loss)))
                throw NumericError("NonFiniteLoss: epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(b));
            loss_sum += double(bce.loss) * double(bsz);
            for (std::int64_t i = 0; i < bsz; ++i)
                correct += ((p[i] >= 0.5f) == (batch.labels[std::size_t(i)] == 1)) ? 1 : 0;
            seen += bsz;
            Gradients<float> grads = model_backward(model, tape, bce.grad_p);
            adam_step(params, grads, adam);
        }
        if (seen == 0) throw DataError("TooFewSamples: no trainable batch in epoch");

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / double(seen);
        rec.train_accuracy = double(correct) / double(seen);
        if (!val_m.records.empty()) {
            SplitStats vs = infer_stats(model, val_m, Split::train, stream);
            rec.val_loss = vs.loss;
            rec.val_accuracy = vs.accuracy;
        }
        if (cfg.log) {
            char line[160];
            if (rec.val_loss)
                std::snprintf(line, sizeof line,
                              "epoch %d train_loss %.6g train_acc %.6g val_loss %.6g val_acc %.6g",
                              rec.epoch, rec.train_loss, rec.train_accuracy, *rec.val_loss,
                              *rec.val_accuracy);
            else
                std::snprintf(line, sizeof line, "epoch %d train_loss %.6g train_acc %.6g",
                              rec.epoch, rec.train_loss, rec.train_accuracy);
            cfg.log(line);
        }
        records.push_back(rec);
    }
    return records;
}

MetricsReport evaluate(ModelF& model, const DatasetManifest& manifest, Split split,
                       double threshold, NormalizeKind normalize) {
    if (manifest.count(split) == 0)
        throw DataError("TooFewSamples: evaluate on empty " + std::string(split_name(split)) +
                        " split");
    const auto& in = model.spec.input_shape;
    BatchStream stream;
    stream.batch_size = 8;
    stream.shuffle_seed = 0;
    stream.target_shape = {in[0], in[1], in[2]};
    stream.normalize = normalize;

    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& batch : make_batches(manifest, split, stream, 0)) {
        TensorF p = model_forward(model, batch.x, LayerMode::infer, 0);
        for (std::size_t i = 0; i < batch.labels.size(); ++i) {
            scores.push_back(double(p[std::int64_t(i)]));
            labels.push_back(batch.labels[i]);
        }
    }
    try {
        return evaluate_scores(scores, labels, threshold);
    } catch (const DataError& e) {
        if (std::string(e.what()).rfind("OneClassOnly", 0) != 0) throw;
        MetricsReport report;
        report.confusion = confusion(scores, labels, threshold);
        ScalarMetrics sm = scalar_metrics(report.confusion);
        report.accuracy = sm.accuracy;
        report.precision = sm.precision;
        report.recall = sm.recall;
        report.f1 = sm.f1;
        report.auc = 0;
        report.has_auc = false;
        report.threshold = threshold;
        return report;
    }
}

CrossValResult cross_validate(const ArchitectureSpec& arch, const DatasetManifest& manifest,
                              const TrainConfig& cfg, int k) {
    check_config(cfg);
    auto folds = stratified_kfold(manifest, k, mix_seed(cfg.seed, kSaltFold));

    CrossValResult result;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        DatasetManifest train_m = subset(manifest, folds[f].first);
        DatasetManifest val_m = subset(manifest, folds[f].second);
        TrainConfig sub = cfg;
        sub.validation.kind = ValidationKind::none;
        sub.seed = mix_seed(cfg.seed, kSaltFold, std::uint64_t(f) + 1);
        ModelF model = build_model<float>(arch, mix_seed(cfg.seed, kSaltInit, std::uint64_t(f)));
        train(model, train_m, sub);
        FoldReport fr;
        fr.fold = int(f);
        fr.report = evaluate(model, val_m, Split::train, 0.5, cfg.normalize);
        result.folds.push_back(std::move(fr));
    }

    auto stats = [&](auto pick, bool auc_only) {
        double sum = 0, sum_sq = 0;
        std::int64_t n = 0;
        for (const auto& fr : result.folds) {
            if (auc_only && !fr.report.has_auc) continue;
            const double x = pick(fr.report);
            sum += x;
            sum_sq += x * x;
            ++n;
        }
        CrossValStats out;
        if (n == 0) return out;
        out.mean = sum / double(n);
        out.stddev = std::sqrt(std::max(0.0, sum_sq / double(n) - out.mean * out.mean));
        return out;
    };
    result.summary.accuracy = stats([](const MetricsReport& r) { return r.accuracy; }, false);
    result.summary.auc = stats([](const MetricsReport& r) { return r.auc; }, true);
    result.summary.precision = stats([](const MetricsReport& r) { return r.precision; }, false);
    result.summary.recall = stats([](const MetricsReport& r) { return r.recall; }, false);
    result.summary.f1 = stats([](const MetricsReport& r) { return r.f1; }, false);
    return result;
}

void export_curves(const std::vector<EpochRecord>& records, const std::string& path) {
    if (records.empty()) throw DataError("EmptyCurves: nothing to export");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("IoFailure: cannot open " + path);
    out << "epoch,split,loss,accuracy\n";
    char line[128];
    for (const auto& rec : records) {
        std::snprintf(line, sizeof line, "%d,train,%.6g,%.6g\n", rec.epoch, rec.train_loss,
                      rec.train_accuracy);
        out << line;
        if (rec.val_loss && rec.val_accuracy) {
            std::snprintf(line, sizeof line, "%d,val,%.6g,%.6g\n", rec.epoch, *rec.val_loss,
                          *rec.val_accuracy);
            out << line;
        }
    }
    out.flush();
    if (!out.good()) throw IoError("IoFailure: cannot write " + path);
}

} // namespace volt3d
