#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "volt3d/dataset.hpp"
#include "volt3d/model.hpp"
#include "volt3d/trainer.hpp"

namespace volt3d {

// Everything a command needs, assembled from a key=value config file plus
// command-line overrides (overrides win). Unknown keys are rejected.
struct RunConfig {
    std::string data_root;        // data.root; empty: synthesize phantoms in memory
    PhantomDatasetConfig phantom; // data.phantom.*
    NormalizeKind normalize = NormalizeKind::minmax; // data.normalize

    ArchitectureSpec arch; // model.*
    TrainConfig train;     // train.*

    bool augment_enabled = false; // augment.enabled
    AugmentationPolicy augment;   // augment.count / augment.noise_sigma / augment.flip_axis

    double eval_threshold = 0.5;       // eval.threshold
    std::string eval_checkpoint;       // eval.checkpoint; empty: <out.dir>/model.ckpt
    std::string eval_split = "test";   // eval.split

    std::string out_dir = "out"; // out.dir

    int ab_seeds = 5;            // ab.seeds
    int ab_epochs_baseline = 50; // ab.epochs_baseline
    int ab_epochs_augmented = 80; // ab.epochs_augmented

    int threads = 0; // run.threads; 0 keeps the library default
};

// Applies one key=value pair. ConfigError on unknown keys or bad values.
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// Defaults, then the file (when given), then the overrides in order. File
// lines: key=value, blank lines and #-comments ignored.
RunConfig load_config(const std::optional<std::string>& file,
                      const std::vector<std::string>& overrides);

// The effective train config: augment.* folded into train.augmentation when
// enabled (policy seed derived from train.seed), normalize passed through.
TrainConfig effective_train_config(const RunConfig& cfg);

} // namespace volt3d
