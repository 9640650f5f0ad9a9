#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "vseg/config.hpp"
#include "vseg/metrics.hpp"
#include "vseg/train.hpp"

namespace vseg {

// Writes img_NNNN.pgm, mask_NNNN.pgm and manifest.csv. Consecutive images
// share a patient id in groups of config.images_per_patient; image i is
// generated from splitmix64(seed ^ i).
void cmd_gen(const RunConfig& config, int count, const std::filesystem::path& out_dir);

// Splits the manifest by patient, trains, and writes checkpoint.vnck (best
// validation epoch), last.vnck, history.csv, split.csv, config.json and, when
// the test split is non-empty, test_metrics.csv.
TrainResult cmd_train(const RunConfig& config, const std::filesystem::path& out_dir, int threads,
                      std::ostream& log);

struct PredictOutputs {
    std::filesystem::path pmap, mask, overlay; // overlay empty unless requested
};

PredictOutputs cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                           const std::filesystem::path& out_dir, bool overlay, Spacing spacing);

// Evaluates every manifest row. With `oracle` the ground truth is scored
// against itself and no checkpoint is read. Writes metrics.csv and
// per_image.csv.
MetricsReport cmd_eval(const std::optional<std::filesystem::path>& checkpoint,
                       const std::filesystem::path& manifest, const std::filesystem::path& out_dir, bool oracle,
                       int threads);

// k-fold comparison of config.compare. Writes comparison.csv and
// fold_<metric>.csv for DSC, SN, SP, HD and ASD.
ComparisonTable cmd_compare(const RunConfig& config, int folds, const std::filesystem::path& out_dir, int threads,
                            std::ostream& log);

// 0 success, 1 usage/config, 2 data/format, 3 numerical failure.
int exit_code_for(const std::exception& e);

// Full command line entry point; never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace vseg
