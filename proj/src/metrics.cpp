#include "vseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "vseg/errors.hpp"

namespace vseg {

std::size_t BinaryMask::count() const
{
    return static_cast<std::size_t>(std::count(bits.values.begin(), bits.values.end(), std::uint8_t{1}));
}

void BinaryMask::validate() const
{
    for (auto v : bits.values)
        if (v > 1)
            throw ConfigError("mask is not binary");
    if (!(spacing.row_mm > 0 && spacing.row_mm < 10 && spacing.col_mm > 0 && spacing.col_mm < 10))
        throw ConfigError("pixel spacing must lie in (0, 10) mm");
}

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b)
{
    if (!a.bits.same_shape(b.bits))
        throw DimensionError("masks differ in shape: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                             " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
}

void require_same_spacing(const BinaryMask& a, const BinaryMask& b)
{
    if (!(a.spacing == b.spacing))
        throw UsageError("masks have different pixel spacing");
}

double ratio_or_absent(std::size_t num, std::size_t den, bool class_absent)
{
    if (den == 0)
        return class_absent ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

// max over a in from of min over b in to of the squared distance, with the
// early-exit scan: once a point has a neighbour closer than the running
// maximum it cannot raise the maximum.
double directed_hausdorff_sq(const PixelSet& from, const PixelSet& to, const Spacing& s)
{
    double cmax = 0;
    for (const auto& [ar, ac] : from) {
        double cmin = std::numeric_limits<double>::infinity();
        for (const auto& [br, bc] : to) {
            const double dr = (ar - br) * s.row_mm;
            const double dc = (ac - bc) * s.col_mm;
            const double d = dr * dr + dc * dc;
            if (d < cmin) {
                cmin = d;
                if (cmin <= cmax)
                    break;
            }
        }
        cmax = std::max(cmax, cmin);
    }
    return cmax;
}

double sum_min_distance(const PixelSet& from, const PixelSet& to, const Spacing& s)
{
    double total = 0;
    for (const auto& [ar, ac] : from) {
        double cmin = std::numeric_limits<double>::infinity();
        for (const auto& [br, bc] : to) {
            const double dr = (ar - br) * s.row_mm;
            const double dc = (ac - bc) * s.col_mm;
            cmin = std::min(cmin, dr * dr + dc * dc);
        }
        total += std::sqrt(cmin);
    }
    return total;
}

} // namespace

Confusion confusion(const BinaryMask& pred, const BinaryMask& gt)
{
    require_same_shape(pred, gt);
    Confusion c;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        const bool p = pred.bits.values[i] != 0;
        const bool g = gt.bits.values[i] != 0;
        if (p && g)
            ++c.tp;
        else if (p)
            ++c.fp;
        else if (g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

double dsc_binary(const Confusion& c)
{
    // Foreground absent from both masks <=> tp + fp + fn == 0.
    return ratio_or_absent(2 * c.tp, 2 * c.tp + c.fp + c.fn, c.tp + c.fp + c.fn == 0);
}

double sensitivity(const Confusion& c)
{
    return ratio_or_absent(c.tp, c.tp + c.fn, c.tp + c.fp + c.fn == 0);
}

double specificity(const Confusion& c)
{
    return ratio_or_absent(c.tn, c.tn + c.fp, c.tn + c.fp + c.fn == 0);
}

PixelSet foreground(const BinaryMask& mask)
{
    PixelSet out;
    for (int r = 0; r < mask.height(); ++r)
        for (int c = 0; c < mask.width(); ++c)
            if (mask.bits.at(r, c))
                out.emplace_back(r, c);
    return out;
}

PixelSet surface(const BinaryMask& mask)
{
    const int h = mask.height(), w = mask.width();
    auto on = [&](int r, int c) { return r >= 0 && r < h && c >= 0 && c < w && mask.bits.at(r, c) != 0; };
    PixelSet out;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (on(r, c) && (!on(r - 1, c) || !on(r + 1, c) || !on(r, c - 1) || !on(r, c + 1)))
                out.emplace_back(r, c);
    return out;
}

double hausdorff(const BinaryMask& pred, const BinaryMask& gt)
{
    require_same_shape(pred, gt);
    require_same_spacing(pred, gt);
    const PixelSet a = foreground(pred);
    const PixelSet b = foreground(gt);
    if (a.empty() || b.empty())
        throw EmptySetError("Hausdorff distance undefined: empty mask");
    const double h_ab = directed_hausdorff_sq(a, b, pred.spacing);
    const double h_ba = directed_hausdorff_sq(b, a, pred.spacing);
    return std::sqrt(std::max(h_ab, h_ba));
}

double asd(const BinaryMask& pred, const BinaryMask& gt)
{
    require_same_shape(pred, gt);
    require_same_spacing(pred, gt);
    const PixelSet a = surface(pred);
    const PixelSet b = surface(gt);
    if (a.empty() || b.empty())
        throw EmptySetError("average surface distance undefined: empty surface");
    const double s_ab = sum_min_distance(a, b, pred.spacing);
    const double s_ba = sum_min_distance(b, a, pred.spacing);
    return (s_ab + s_ba) / static_cast<double>(a.size() + b.size());
}

ImageMetrics compute_metrics(const std::string& id, const BinaryMask& pred, const BinaryMask& gt)
{
    ImageMetrics m;
    m.id = id;
    const Confusion c = confusion(pred, gt);
    m.dsc = dsc_binary(c);
    m.sn = sensitivity(c);
    m.sp = specificity(c);
    try {
        m.hd_mm = hausdorff(pred, gt);
        m.asd_mm = asd(pred, gt);
    } catch (const EmptySetError&) {
        m.hd_mm.reset();
        m.asd_mm.reset();
    }
    return m;
}

MetricSummary summarize(const std::vector<std::optional<double>>& values)
{
    MetricSummary s;
    double sum = 0;
    for (const auto& v : values) {
        if (!v) {
            ++s.excluded;
            continue;
        }
        sum += *v;
        ++s.count;
    }
    if (s.count == 0)
        return s;
    s.mean = sum / static_cast<double>(s.count);
    if (s.count > 1) {
        double ss = 0;
        for (const auto& v : values)
            if (v)
                ss += (*v - s.mean) * (*v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(s.count - 1));
    }
    return s;
}

namespace {

template <typename Field>
MetricSummary collect(const std::vector<ImageMetrics>& images, Field field)
{
    std::vector<std::optional<double>> values;
    values.reserve(images.size());
    for (const auto& m : images)
        values.push_back(field(m));
    return summarize(values);
}

} // namespace

MetricSummary MetricsReport::dsc() const
{
    return collect(images, [](const ImageMetrics& m) { return std::optional<double>(m.dsc); });
}
MetricSummary MetricsReport::sn() const
{
    return collect(images, [](const ImageMetrics& m) { return std::optional<double>(m.sn); });
}
MetricSummary MetricsReport::sp() const
{
    return collect(images, [](const ImageMetrics& m) { return std::optional<double>(m.sp); });
}
MetricSummary MetricsReport::hd() const
{
    return collect(images, [](const ImageMetrics& m) { return m.hd_mm; });
}
MetricSummary MetricsReport::asd() const
{
    return collect(images, [](const ImageMetrics& m) { return m.asd_mm; });
}

std::string format_metric(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

namespace {

std::string format_optional(const std::optional<double>& v)
{
    return v ? format_metric(*v) : std::string("undefined");
}

std::string format_summary(const MetricSummary& s)
{
    return s.count ? format_metric(s.mean) : std::string("undefined");
}

} // namespace

void write_summary_csv(std::ostream& os, const std::vector<MetricsReport>& reports)
{
    os << "model," << kMetricColumns << '\n';
    for (const auto& r : reports) {
        os << r.model << ',' << format_summary(r.hd()) << ',' << format_summary(r.dsc()) << ','
           << format_summary(r.sn()) << ',' << format_summary(r.sp()) << ',' << format_summary(r.asd()) << '\n';
    }
}

void write_per_image_csv(std::ostream& os, const MetricsReport& report)
{
    os << "id," << kMetricColumns << '\n';
    for (const auto& m : report.images) {
        os << m.id << ',' << format_optional(m.hd_mm) << ',' << format_metric(m.dsc) << ',' << format_metric(m.sn)
           << ',' << format_metric(m.sp) << ',' << format_optional(m.asd_mm) << '\n';
    }
}

} // namespace vseg
