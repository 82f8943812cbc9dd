#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <omp.h>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "volt3d/config.hpp"
#include "volt3d/dataset.hpp"
#include "volt3d/errors.hpp"
#include "volt3d/experiment.hpp"
#include "volt3d/gradcheck_suite.hpp"
#include "volt3d/model_io.hpp"
#include "volt3d/nifti.hpp"
#include "volt3d/rng.hpp"
#include "volt3d/trainer.hpp"

namespace fs = std::filesystem;
using namespace volt3d;

namespace {

constexpr std::uint64_t kSaltModelInit = 0x6d6f64;

const char* datatype_name(std::int16_t code) {
    switch (code) {
        case kDtUint8: return "uint8";
        case kDtInt16: return "int16";
        case kDtInt32: return "int32";
        case kDtFloat32: return "float32";
        case kDtFloat64: return "float64";
        default: return "unknown";
    }
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void apply_threads(const RunConfig& cfg) {
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
}

DatasetManifest load_dataset(const RunConfig& cfg) {
    if (!cfg.data_root.empty()) return scan_directory(cfg.data_root);
    return make_phantom_dataset(cfg.phantom);
}

void ensure_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("IoFailure: cannot create " + cfg.out_dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("IoFailure: cannot open " + path);
    out << text;
    out.flush();
    if (!out.good()) throw IoError("IoFailure: cannot write " + path);
}

int cmd_inspect(const std::string& path) {
    NiftiHeader h = read_header(path);
    std::cout << "file: " << path << "\n";
    std::cout << "magic: " << h.magic[0] << h.magic[1] << h.magic[2] << "\n";
    std::cout << "dim: " << h.dim[1] << " " << h.dim[2] << " " << h.dim[3] << "\n";
    std::cout << "datatype: " << h.datatype_code << " (" << datatype_name(h.datatype_code) << ")\n";
    std::cout << "bitpix: " << h.bitpix << "\n";
    std::cout << "pixdim: " << fmt(h.pixdim[1]) << " " << fmt(h.pixdim[2]) << " "
              << fmt(h.pixdim[3]) << "\n";
    std::cout << "vox_offset: " << fmt(h.vox_offset) << "\n";
    std::cout << "scl_slope: " << fmt(h.scl_slope) << "\n";
    std::cout << "scl_inter: " << fmt(h.scl_inter) << "\n";
    std::cout << "byte_order: " << (h.swapped ? "swapped" : "native") << "\n";
    return 0;
}

int cmd_phantom(const RunConfig& cfg) {
    apply_threads(cfg);
    ensure_out_dir(cfg);
    DatasetManifest manifest = make_phantom_dataset(cfg.phantom);
    int per_folder[2][2] = {{0, 0}, {0, 0}};
    int written = 0;
    for (const auto& rec : manifest.records) {
        const int s = rec.split == Split::train ? 0 : 1;
        const char* split_dir = rec.split == Split::train ? "train" : "test";
        const char* class_dir = rec.label == 0 ? "health" : "patient";
        fs::path dir = fs::path(cfg.out_dir) / split_dir / class_dir;
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("IoFailure: cannot create " + dir.string() + ": " + ec.message());
        char name[64];
        std::snprintf(name, sizeof name, "case_%03d.nii.gz", per_folder[s][rec.label]++);
        Volume v = generate_phantom(phantom_from_string(rec.source));
        write_volume(dir / name, v);
        ++written;
    }
    std::cout << "wrote " << written << " files under " << cfg.out_dir << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    apply_threads(cfg);
    ensure_out_dir(cfg);
    DatasetManifest manifest = load_dataset(cfg);
    TrainConfig tc = effective_train_config(cfg);
    tc.log = [](const std::string& line) { std::cout << line << "\n"; };

    ModelF model = build_model<float>(cfg.arch, mix_seed(tc.seed, kSaltModelInit));
    auto records = train(model, manifest, tc);

    const std::string curves = (fs::path(cfg.out_dir) / "curves.csv").string();
    const std::string ckpt = (fs::path(cfg.out_dir) / "model.ckpt").string();
    const std::string metrics = (fs::path(cfg.out_dir) / "metrics.json").string();
    export_curves(records, curves);
    save_checkpoint(model, ckpt);
    MetricsReport report = evaluate(model, manifest, Split::test, cfg.eval_threshold, cfg.normalize);
    write_text(metrics, report_to_json(report) + "\n");

    std::cout << "test accuracy " << fmt(report.accuracy);
    if (report.has_auc) std::cout << " auc " << fmt(report.auc);
    std::cout << "\n";
    std::cout << "wrote " << curves << ", " << ckpt << ", " << metrics << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    apply_threads(cfg);
    ensure_out_dir(cfg);
    DatasetManifest manifest = load_dataset(cfg);
    const std::string ckpt = cfg.eval_checkpoint.empty()
                                 ? (fs::path(cfg.out_dir) / "model.ckpt").string()
                                 : cfg.eval_checkpoint;
    ModelF model = load_checkpoint(ckpt);
    const Split split = cfg.eval_split == "train" ? Split::train : Split::test;
    MetricsReport report = evaluate(model, manifest, split, cfg.eval_threshold, cfg.normalize);
    const std::string json = report_to_json(report);
    write_text((fs::path(cfg.out_dir) / "metrics.json").string(), json + "\n");
    std::cout << json << "\n";
    return 0;
}

int cmd_ab(const RunConfig& cfg) {
    apply_threads(cfg);
    ensure_out_dir(cfg);
    AbConfig ab;
    ab.arch = cfg.arch;
    ab.data = cfg.phantom;
    ab.num_seeds = cfg.ab_seeds;
    ab.base_seed = cfg.train.seed;
    ab.epochs_baseline = cfg.ab_epochs_baseline;
    ab.epochs_augmented = cfg.ab_epochs_augmented;
    ab.batch_size = cfg.train.batch_size;
    ab.lr = cfg.train.lr;
    ab.augment = cfg.augment;
    ab.normalize = cfg.normalize;

    AbResult result = ab_experiment(ab, [](const AbRow& row) {
        std::cout << "seed " << row.seed << " baseline acc " << fmt(row.baseline_accuracy)
                  << " auc " << fmt(row.baseline_auc) << " | augmented acc "
                  << fmt(row.augmented_accuracy) << " auc " << fmt(row.augmented_auc) << "\n";
    });
    const std::string csv = (fs::path(cfg.out_dir) / "ab.csv").string();
    write_ab_csv(result, csv);
    std::cout << "mean delta accuracy " << fmt(result.mean.delta_accuracy) << " delta auc "
              << fmt(result.mean.delta_auc) << "\n";
    std::cout << "wrote " << csv << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& corrupt) {
    auto entries = run_gradcheck_suite(corrupt);
    std::printf("%-12s %-14s %-10s %s\n", "layer", "max_rel_error", "threshold", "status");
    for (const auto& e : entries)
        std::printf("%-12s %-14.3e %-10.0e %s\n", e.report.op_name.c_str(),
                    e.report.max_rel_error, e.threshold, e.report.passed ? "PASS" : "FAIL");
    return suite_passed(entries) ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"volt3d: volumetric 3-D CNN pipeline on NIfTI volumes"};
    app.require_subcommand(1);

    std::string config_file;
    std::vector<std::string> overrides;
    std::string inspect_path;
    std::string corrupt;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_file, "key=value config file");
        sub->add_option("overrides", overrides, "key=value overrides (win over the file)");
    };

    CLI::App* inspect = app.add_subcommand("inspect", "dump a NIfTI header");
    inspect->add_option("path", inspect_path, "NIfTI file (.nii or .nii.gz)")->required();
    CLI::App* phantom = app.add_subcommand("phantom", "write a phantom dataset tree");
    add_common(phantom);
    CLI::App* train_cmd = app.add_subcommand("train", "train a model, write artifacts");
    add_common(train_cmd);
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd);
    CLI::App* ab = app.add_subcommand("ab", "augmentation A/B benchmark over seeds");
    add_common(ab);
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference layer suite");
    gradcheck->add_option("--corrupt", corrupt, "perturb a layer's gradient (harness check)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (inspect->parsed()) return cmd_inspect(inspect_path);
        if (gradcheck->parsed()) return cmd_gradcheck(corrupt);
        const std::optional<std::string> file =
            config_file.empty() ? std::nullopt : std::optional<std::string>(config_file);
        RunConfig cfg = load_config(file, overrides);
        if (phantom->parsed()) return cmd_phantom(cfg);
        if (train_cmd->parsed()) return cmd_train(cfg);
        if (eval_cmd->parsed()) return cmd_eval(cfg);
        if (ab->parsed()) return cmd_ab(cfg);
        std::cerr << "error: no command\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
