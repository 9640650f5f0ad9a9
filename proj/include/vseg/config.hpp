#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vseg/synth.hpp"
#include "vseg/train.hpp"

namespace vseg {

struct CompareModel {
    std::string name;
    ArchConfig arch;
    // Epochs of in-fold pretraining whose best checkpoint initializes this
    // model by name; 0 trains from scratch.
    int pretrain_epochs = 0;
};

// Everything a command needs, read from one JSON document. Every section and
// key is optional; unknown keys are rejected with ConfigError.
struct RunConfig {
    std::uint64_t seed = 0;
    SynthConfig synth;
    int images_per_patient = 3;
    TrainConfig train; // its arch/loss/augment are the "arch"/"loss"/"augment" sections
    std::array<double, 3> split_ratios{0.7, 0.1, 0.2};
    int folds = 10;
    std::filesystem::path manifest; // relative paths resolve against the config file
    std::filesystem::path pretrained;
    LoadMode pretrained_mode = LoadMode::by_name;
    std::vector<CompareModel> compare;

    // Copies `seed` into the synth and train sections.
    void apply_seed(std::uint64_t s);
    void validate() const;
};

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

// The four Table-2 style rows: U-Net, U-Net++, U-Net3+ w/o DS, U-Net3+.
std::vector<CompareModel> default_compare_models(const ArchConfig& base);

} // namespace vseg
