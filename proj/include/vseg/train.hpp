#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vseg/arch.hpp"
#include "vseg/augment.hpp"
#include "vseg/checkpoint.hpp"
#include "vseg/loss.hpp"
#include "vseg/metrics.hpp"
#include "vseg/optimizer.hpp"
#include "vseg/sample.hpp"
#include "vseg/split.hpp"

namespace vseg {

struct TrainConfig {
    ArchConfig arch;
    LossConfig loss;
    RmsPropConfig optimizer;
    double lr_decay = 0.0; // epoch e trains at lr * (1 - lr_decay)^(e-1)
    int batch_size = 2;
    int epochs = 50;
    std::uint64_t seed = 0;
    AugmentPolicy augment = AugmentPolicy::disabled();

    void validate() const; // ConfigError
};

struct HistoryRow {
    int epoch = 0;
    double train_loss = 0;
    double train_bce = 0;
    double train_dice_term = 0;
    double train_l2 = 0;
    double val_dsc = 0;
};

inline constexpr const char* kHistoryHeader = "epoch,train_loss,train_bce,train_dice_term,train_l2,val_dsc";

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& history);

struct TrainOptions {
    const Checkpoint* pretrained = nullptr; // initial weights, loaded with `pretrained_mode`
    LoadMode pretrained_mode = LoadMode::by_name;
    std::function<void(const HistoryRow&)> on_epoch;
};

struct TrainResult {
    Checkpoint best;      // highest validation DSC (earliest epoch on ties)
    Checkpoint last;      // state after the final epoch
    std::vector<HistoryRow> history;
    int best_epoch = 0;
    double best_val_dsc = 0;
};

// Trains on plan.train and selects on plan.val (plan.train when val is empty).
// Ids are resolved against `samples`; unknown ids, an empty training set or
// mismatched image sizes raise before the first epoch. NumericalError on a
// non-finite loss.
TrainResult train(const TrainConfig& config, std::span<const Sample> samples, const SplitPlan& plan,
                  const TrainOptions& options = {});

// Eval-mode forward of one image; returns the final probability map.
ProbabilityMap predict(Network<float>& network, const Image& image);

// Otsu-binarized prediction using the image's spacing for the mask.
BinaryMask predict_mask(Network<float>& network, const Image& image, Spacing spacing);

// Per-image metrics in sample order. Images are distributed over `threads`
// workers; results do not depend on the thread count.
MetricsReport evaluate_network(const Network<float>& network, std::span<const Sample> samples,
                               const std::string& model, int threads = 1);
MetricsReport evaluate(const Checkpoint& checkpoint, std::span<const Sample> samples, const std::string& model,
                       int threads = 1);
// Scores given masks against the samples' ground truth (the oracle path).
MetricsReport evaluate_predictions(std::span<const BinaryMask> predictions, std::span<const Sample> samples,
                                   const std::string& model);

// Mean DSC of Otsu-binarized predictions.
double mean_dsc(Network<float>& network, std::span<const Sample* const> samples);

struct AblationEntry {
    std::string name;
    TrainConfig config;
    // Trains this configuration first (on the same fold) and starts from its
    // best checkpoint, by name; stands in for pretrained initialization.
    std::optional<TrainConfig> pretrain;
};

struct ComparisonTable {
    std::vector<MetricsReport> pooled;                  // one per entry, all folds' test images
    std::vector<std::vector<MetricsReport>> per_fold;   // [entry][fold]
};

ComparisonTable run_ablation(const std::vector<AblationEntry>& entries, std::span<const Sample> samples, int folds,
                             std::uint64_t seed, int threads = 1);

// Table layout: model,HD(mm),DSC,SN,SP,ASD(mm) with one row per entry.
void write_comparison_csv(std::ostream& os, const ComparisonTable& table);
// One series per metric: header "fold,<names>", then one row per fold of means.
void write_fold_series_csv(std::ostream& os, const ComparisonTable& table, const std::string& metric);

} // namespace vseg
