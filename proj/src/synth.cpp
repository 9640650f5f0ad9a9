#include "vseg/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "vseg/errors.hpp"
#include "vseg/rng.hpp"

namespace vseg {

void Sample::validate() const
{
    if (!image.same_shape(mask.bits))
        throw DimensionError("sample '" + id + "': image and mask shapes differ");
    mask.validate();
}

void SynthConfig::validate() const
{
    if (size < 8 || (size & (size - 1)) != 0)
        throw ConfigError("synth size must be a power of two >= 8");
    if (branch_depth < 0 || branch_depth > 8)
        throw ConfigError("branch_depth must lie in [0, 8]");
    if (!(vessel_width_min > 0 && vessel_width_max >= vessel_width_min))
        throw ConfigError("vessel width range must be positive and ordered");
    if (noise_sigma < 0 || illumination_gradient < 0)
        throw ConfigError("noise_sigma and illumination_gradient must be >= 0");
    if (!(background >= 0 && background <= 1 && vessel >= 0 && vessel <= 1))
        throw ConfigError("background and vessel intensities must lie in [0, 1]");
}

namespace {

struct Point {
    double x, y; // column, row
};

// Marks pixel centres within `radius` of segment ab.
void draw_capsule(Raster<std::uint8_t>& mask, Point a, Point b, double radius)
{
    const int c0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - radius)));
    const int c1 = std::min(mask.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + radius)));
    const int r0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - radius)));
    const int r1 = std::min(mask.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + radius)));
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            double t = len2 > 0 ? ((c - a.x) * dx + (r - a.y) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double px = a.x + t * dx - c, py = a.y + t * dy - r;
            if (px * px + py * py <= radius * radius)
                mask.at(r, c) = 1;
        }
    }
}

struct TreeGrower {
    Raster<std::uint8_t>& mask;
    Rng& rng;
    double width_min;

    void grow(Point p, double angle, double length, double width, int depth)
    {
        const int steps = std::max(3, static_cast<int>(length / 4.0));
        const double step = length / steps;
        const double end_width = std::max(width_min, width * 0.85);
        for (int s = 0; s < steps; ++s) {
            angle += rng.uniform(-0.25, 0.25);
            const Point q{p.x + std::cos(angle) * step, p.y + std::sin(angle) * step};
            const double w = width + (end_width - width) * (s + 1) / steps;
            draw_capsule(mask, p, q, 0.5 * w);
            p = q;
        }
        if (depth == 0)
            return;
        const double child_width = std::max(width_min, end_width * 0.8);
        for (int side : {-1, 1}) {
            const double turn = side * rng.uniform(0.35, 0.8);
            grow(p, angle + turn, length * rng.uniform(0.6, 0.8), child_width, depth - 1);
        }
    }
};

} // namespace

Sample generate(const SynthConfig& config, const std::string& id, const std::string& patient_id)
{
    config.validate();
    Rng rng(config.seed);
    const int n = config.size;
    const double scale = n / 64.0;

    Sample s;
    s.id = id;
    s.patient_id = patient_id;
    static constexpr std::array<const char*, 4> kViews = {"LCA-LAO", "LCA-RAO", "RCA-LAO", "RCA-RAO"};
    s.view_tag = kViews[rng.below(kViews.size())];

    s.mask = BinaryMask(n, n, config.spacing);
    TreeGrower grower{s.mask.bits, rng, config.vessel_width_min * scale};
    const Point root{rng.uniform(0.3, 0.7) * n, rng.uniform(0.02, 0.12) * n};
    const double angle = std::numbers::pi / 2 + rng.uniform(-0.4, 0.4);
    grower.grow(root, angle, rng.uniform(0.35, 0.45) * n, config.vessel_width_max * scale, config.branch_depth);

    const double ramp_angle = rng.uniform(0.0, 2 * std::numbers::pi);
    const double rc = std::cos(ramp_angle), rs = std::sin(ramp_angle);
    s.image = Image(n, n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            double v = s.mask.bits.at(r, c) ? config.vessel : config.background;
            if (config.illumination_gradient > 0)
                v += config.illumination_gradient * ((c * rc + r * rs) / n - 0.5 * (rc + rs));
            if (config.noise_sigma > 0)
                v += config.noise_sigma * rng.normal();
            s.image.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return s;
}

} // namespace vseg
