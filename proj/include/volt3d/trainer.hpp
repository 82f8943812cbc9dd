#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "volt3d/dataset.hpp"
#include "volt3d/errors.hpp"
#include "volt3d/metrics.hpp"
#include "volt3d/model.hpp"

namespace volt3d {

// ---------------------------------------------------------------------------
// Adam.

template <typename T>
struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    std::int64_t step = 0;
    NamedTensors<T> m; // first moments, mirroring the parameter shapes
    NamedTensors<T> v; // second moments
};

// One Adam update with bias correction. Moment buffers are allocated on the
// first call; `step` advances by exactly one per call. The key sets of
// `params` and `grads` must match (KeyMismatch otherwise).
template <typename T>
void adam_step(std::vector<std::pair<std::string, Tensor<T>*>>& params,
               const Gradients<T>& grads, AdamState<T>& state) {
    if (!(state.beta1 > 0 && state.beta1 < 1) || !(state.beta2 > 0 && state.beta2 < 1))
        throw ConfigError("BadConfig: adam betas must lie in (0,1)");
    if (!(state.epsilon > 0)) throw ConfigError("BadConfig: adam epsilon must be positive");
    if (grads.names.size() != params.size())
        throw ShapeError("KeyMismatch: adam_step got " + std::to_string(grads.names.size()) +
                         " gradients for " + std::to_string(params.size()) + " parameters");
    if (state.m.names.empty()) {
        for (auto& [name, t] : params) {
            state.m.names.push_back(name);
            state.m.tensors.emplace_back(t->shape());
            state.v.names.push_back(name);
            state.v.tensors.emplace_back(t->shape());
        }
    }
    const std::int64_t t = state.step + 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(t));
    const double bc2 = 1.0 - std::pow(state.beta2, double(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [name, theta] = params[i];
        const Tensor<T>& g = grads.at(name);
        if (g.shape() != theta->shape())
            throw ShapeError("KeyMismatch: gradient shape differs from parameter " + name);
        Tensor<T>& m = state.m.at(name);
        Tensor<T>& v = state.v.at(name);
        const T b1 = T(state.beta1), b2 = T(state.beta2);
        for (std::int64_t j = 0; j < theta->size(); ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            const double mhat = double(m[j]) / bc1;
            const double vhat = double(v[j]) / bc2;
            (*theta)[j] -= T(state.lr * mhat / (std::sqrt(vhat) + state.epsilon));
        }
    }
    state.step = t;
}

// ---------------------------------------------------------------------------
// Training configuration.

enum class ValidationKind { none, holdout };

struct ValidationSpec {
    ValidationKind kind = ValidationKind::none;
    double holdout_fraction = 0.2; // stratified per class
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 2; // BatchNorm needs at least two samples per train batch
    std::optional<AugmentationPolicy> augmentation;
    double noise_sigma = 0.0; // per-batch Gaussian noise injected during training
    double lr = 1e-4;
    std::uint64_t seed = 0;
    ValidationSpec validation;
    NormalizeKind normalize = NormalizeKind::minmax;
    std::function<void(const std::string&)> log; // optional progress sink
};

// Paper regimes: 50 epochs raw, 80 epochs with flip augmentation.
TrainConfig baseline_regime(std::uint64_t seed);
TrainConfig augmented_regime(std::uint64_t seed);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double train_accuracy = 0;
    std::optional<double> val_loss;
    std::optional<double> val_accuracy;
};

// ---------------------------------------------------------------------------
// Driving loops.

// Stratified per-class holdout of the train split: (train part, validation
// part). Deterministic in (manifest, fraction, seed).
std::pair<DatasetManifest, DatasetManifest>
stratified_holdout(const DatasetManifest& manifest, double fraction, std::uint64_t seed);

// Runs the optimization loop over the manifest's train split, mutating the
// model in place, and returns one record per epoch. Augmentation (when
// configured) is applied after the holdout split, so no validation source
// leaks an augmented copy into training. Epoch loss/accuracy come from the
// train-mode forward passes that drive the updates; a trailing batch of one
// record is skipped (BatchNorm needs two). A non-finite batch loss aborts
// with NumericError("NonFiniteLoss: ...").
std::vector<EpochRecord> train(ModelF& model, const DatasetManifest& manifest,
                               const TrainConfig& cfg);

// Inference-mode metrics over every record of `split`. When the split holds a
// single class the report carries the threshold metrics with has_auc=false.
MetricsReport evaluate(ModelF& model, const DatasetManifest& manifest, Split split,
                       double threshold = 0.5, NormalizeKind normalize = NormalizeKind::minmax);

struct FoldReport {
    int fold = 0;
    MetricsReport report;
};

struct CrossValStats {
    double mean = 0, stddev = 0; // population std over folds
};

struct CrossValSummary {
    CrossValStats accuracy, auc, precision, recall, f1;
};

struct CrossValResult {
    std::vector<FoldReport> folds;
    CrossValSummary summary;
};

// k-fold cross-validation over the train split: each fold trains a fresh
// seeded model on the other folds (augmentation applied fold-locally) and
// evaluates on the held-out fold. AUC is summarized over folds that have it.
CrossValResult cross_validate(const ArchitectureSpec& arch, const DatasetManifest& manifest,
                              const TrainConfig& cfg, int k);

// CSV with header "epoch,split,loss,accuracy"; one row per (epoch, split)
// present, values at six significant digits.
void export_curves(const std::vector<EpochRecord>& records, const std::string& path);

} // namespace volt3d
