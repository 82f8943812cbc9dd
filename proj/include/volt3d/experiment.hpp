#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "volt3d/dataset.hpp"
#include "volt3d/model.hpp"
#include "volt3d/trainer.hpp"

namespace volt3d {

// Paired augmentation A/B benchmark: per seed, a baseline and an augmented
// model start from the same initialization, train on the same phantom dataset
// (the augmented arm with flipped copies added), and are scored on the shared
// test split.
struct AbConfig {
    ArchitectureSpec arch;
    PhantomDatasetConfig data;
    int num_seeds = 5;
    std::uint64_t base_seed = 0;
    int epochs_baseline = 50;
    int epochs_augmented = 80;
    int batch_size = 2;
    double lr = 1e-4;
    AugmentationPolicy augment; // seed is derived per replicate
    NormalizeKind normalize = NormalizeKind::minmax;
};

struct AbRow {
    int seed = 0; // replicate id; all per-replicate seeds derive from it
    double baseline_accuracy = 0, baseline_auc = 0;
    double augmented_accuracy = 0, augmented_auc = 0;
    double delta_accuracy() const { return augmented_accuracy - baseline_accuracy; }
    double delta_auc() const { return augmented_auc - baseline_auc; }
};

struct AbSummary {
    double baseline_accuracy = 0, baseline_auc = 0;
    double augmented_accuracy = 0, augmented_auc = 0;
    double delta_accuracy = 0, delta_auc = 0;
};

struct AbResult {
    std::vector<AbRow> rows;
    AbSummary mean;
};

// One replicate (both arms). Deterministic in (cfg, replicate).
AbRow ab_run_seed(const AbConfig& cfg, int replicate);

// All replicates plus the mean row. ConfigError when num_seeds < 2. The
// progress callback, when set, sees each row as it completes.
AbResult ab_experiment(const AbConfig& cfg,
                       const std::function<void(const AbRow&)>& progress = {});

// CSV: header, one row per replicate, then a "mean" summary row.
void write_ab_csv(const AbResult& result, const std::string& path);

} // namespace volt3d
