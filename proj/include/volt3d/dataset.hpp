#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "volt3d/tensor.hpp"
#include "volt3d/volume.hpp"
#include "volt3d/volume_ops.hpp"

namespace volt3d {

enum class Split { train, test };

inline const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

// ---------------------------------------------------------------------------
// Synthetic phantoms: an ellipsoidal "brain" of intensity 1 with a centered
// "ventricle" cavity at 0.2 whose size carries the class signal.

struct PhantomSpec {
    std::array<int, 3> grid_shape{32, 32, 16};
    std::array<double, 3> brain_radii{11.0, 11.0, 5.5};
    double ventricle_scale = 1.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    int label = 0;

    bool operator==(const PhantomSpec&) const = default;
};

// Ventricle radii = brain_radii * this factor * ventricle_scale.
inline constexpr double kVentricleBase = 0.35;

std::string phantom_to_string(const PhantomSpec& spec);
PhantomSpec phantom_from_string(const std::string& text);
bool is_phantom_source(const std::string& source);

// Deterministic in spec.seed. Center and radii are jittered +-10% (the radii
// jitter is volume-preserving, so total intensity depends on the class alone
// up to voxelization); construction is mirror-symmetric in distribution along
// every axis, which keeps flip augmentation label-preserving.
Volume generate_phantom(const PhantomSpec& spec);

// ---------------------------------------------------------------------------
// Manifest.

struct DatasetRecord {
    std::string source; // file path, or a serialized PhantomSpec
    int label = 0;      // 0 = health, 1 = patient
    Split split = Split::train;
    std::string transform;      // empty, or e.g. "flip(axis=1)+noise(sigma=0.01,seed=7)"
    std::string augmented_from; // source id this record was derived from

    bool operator==(const DatasetRecord&) const = default;
};

struct DatasetManifest {
    std::vector<DatasetRecord> records;

    std::vector<int> indices(Split split) const;
    std::int64_t count(Split split) const;
    std::int64_t count(Split split, int label) const;

    bool operator==(const DatasetManifest&) const = default;
};

// Scans root/{train,test}/{health,patient}/*.nii[.gz]; health maps to label 0,
// patient to 1. Ordering is lexicographic per folder, so the manifest is a
// pure function of the file tree.
DatasetManifest scan_directory(const std::string& root);

// Appends per-class augmented train records (seeded sampling, with
// replacement only once a class is exhausted); the test split is untouched.
DatasetManifest apply_augmentation(const DatasetManifest& manifest, const AugmentationPolicy& policy);

struct PhantomDatasetConfig {
    std::array<int, 3> grid_shape{32, 32, 16};
    std::array<double, 3> brain_radii{0, 0, 0}; // zeros: 0.34375 * grid_shape
    double class0_scale = 1.0;
    double class1_scale = 1.6;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    int train_per_class = 9;
    int test_per_class = 5;
};

// Manifest of serialized phantom records, one independent sub-seed each.
DatasetManifest make_phantom_dataset(const PhantomDatasetConfig& cfg);

// Line-delimited text: source, label, split, transform, augmented_from.
void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// Batch pipeline.

enum class NormalizeKind { minmax, zscore };

struct BatchStream {
    int batch_size = 2;
    std::uint64_t shuffle_seed = 0;
    std::array<int, 3> target_shape{128, 128, 64};
    NormalizeKind normalize = NormalizeKind::minmax;
};

struct Batch {
    TensorF x; // (B, X, Y, Z, 1)
    std::vector<int> labels;
    std::vector<int> record_indices; // into manifest.records
};

// Record permutation for one epoch: seeded by (shuffle_seed, epoch) only.
std::vector<int> epoch_permutation(int count, std::uint64_t shuffle_seed, int epoch);

// Source volume with the record's transform tag applied and preprocessing run:
// load -> flip -> normalize -> noise -> resize-to-target; returns (X,Y,Z,1).
TensorF preprocess_record(const DatasetRecord& record, const BatchStream& stream);

// One epoch of batches over `split`, shuffled by (stream.shuffle_seed, epoch);
// the final short batch is emitted as-is.
std::vector<Batch> make_batches(const DatasetManifest& manifest, Split split,
                                const BatchStream& stream, int epoch);

// k stratified folds over the train split; returns (train indices, validation
// indices) pairs covering every train record exactly once, per-class fold
// sizes differing by at most one.
std::vector<std::pair<std::vector<int>, std::vector<int>>>
stratified_kfold(const DatasetManifest& manifest, int k, std::uint64_t seed);

} // namespace volt3d
