#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "vseg/image.hpp"

namespace vseg {

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    friend bool operator==(const Confusion&, const Confusion&) = default;
};

Confusion confusion(const BinaryMask& pred, const BinaryMask& gt);

// Empty denominators give 1 when the relevant class is absent from both
// masks and 0 otherwise.
double dsc_binary(const Confusion& c);
double sensitivity(const Confusion& c);
double specificity(const Confusion& c);

using PixelSet = std::vector<std::pair<int, int>>; // (row, col)

PixelSet foreground(const BinaryMask& mask);
// Foreground pixels with a 4-neighbour that is background or off-image.
PixelSet surface(const BinaryMask& mask);

// Symmetric Hausdorff distance over all foreground pixel centres, in mm.
// Throws EmptySetError if either mask is empty.
double hausdorff(const BinaryMask& pred, const BinaryMask& gt);

// Average symmetric surface distance in mm. Throws EmptySetError if either
// surface is empty.
double asd(const BinaryMask& pred, const BinaryMask& gt);

struct ImageMetrics {
    std::string id;
    double dsc = 0, sn = 0, sp = 0;
    std::optional<double> hd_mm;  // nullopt: undefined (empty mask)
    std::optional<double> asd_mm;
};

ImageMetrics compute_metrics(const std::string& id, const BinaryMask& pred, const BinaryMask& gt);

struct MetricSummary {
    double mean = 0;
    double stddev = 0; // sample standard deviation, 0 for a single value
    std::size_t count = 0;
    std::size_t excluded = 0;
};

MetricSummary summarize(const std::vector<std::optional<double>>& values);

// Per-image records plus aggregates for one model/fold.
struct MetricsReport {
    std::string model;
    int fold = -1; // -1: not part of a cross-validation run
    std::vector<ImageMetrics> images;

    MetricSummary dsc() const;
    MetricSummary sn() const;
    MetricSummary sp() const;
    MetricSummary hd() const;
    MetricSummary asd() const;
};

// Column layout of the comparison table.
inline constexpr const char* kMetricColumns = "HD(mm),DSC,SN,SP,ASD(mm)";

// "model,HD(mm),DSC,SN,SP,ASD(mm)" header plus one row of means.
void write_summary_csv(std::ostream& os, const std::vector<MetricsReport>& reports);
// One row per image; undefined distances are written as "undefined".
void write_per_image_csv(std::ostream& os, const MetricsReport& report);

std::string format_metric(double v);

} // namespace vseg
