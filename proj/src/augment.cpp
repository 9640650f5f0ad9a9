#include "vseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vseg/errors.hpp"

namespace vseg {

namespace {

constexpr float kImageFill = 1.0f;

constexpr std::array<std::string_view, 8> kOpNames = {"hflip", "vflip", "rotate", "scale",
                                                       "crop",  "shift", "gauss_noise", "gauss_blur"};

float bilinear_or_fill(const Image& img, double r, double c)
{
    if (r < 0 || c < 0 || r > img.height - 1 || c > img.width - 1)
        return kImageFill;
    const int r0 = static_cast<int>(std::floor(r)), c0 = static_cast<int>(std::floor(c));
    const int r1 = std::min(r0 + 1, img.height - 1), c1 = std::min(c0 + 1, img.width - 1);
    const double fr = r - r0, fc = c - c0;
    const double top = img.at(r0, c0) * (1 - fc) + img.at(r0, c1) * fc;
    const double bottom = img.at(r1, c0) * (1 - fc) + img.at(r1, c1) * fc;
    return static_cast<float>(std::clamp(top * (1 - fr) + bottom * fr, 0.0, 1.0));
}

std::uint8_t nearest_or_zero(const BinaryMask& m, double r, double c)
{
    const long ri = std::lround(r), ci = std::lround(c);
    if (ri < 0 || ci < 0 || ri >= m.height() || ci >= m.width())
        return 0;
    return m.bits.at(static_cast<int>(ri), static_cast<int>(ci)) ? 1 : 0;
}

// Resamples image and mask through an inverse map output(r,c) -> source.
template <typename Map>
Sample resample(const Sample& s, Map inverse)
{
    Sample out = s;
    for (int r = 0; r < s.image.height; ++r) {
        for (int c = 0; c < s.image.width; ++c) {
            const auto [sr, sc] = inverse(static_cast<double>(r), static_cast<double>(c));
            out.image.at(r, c) = bilinear_or_fill(s.image, sr, sc);
            out.mask.bits.at(r, c) = nearest_or_zero(s.mask, sr, sc);
        }
    }
    return out;
}

} // namespace

std::string_view to_string(AugmentOp op)
{
    return kOpNames[static_cast<std::size_t>(op)];
}

AugmentOp parse_augment_op(std::string_view name)
{
    for (std::size_t i = 0; i < kOpNames.size(); ++i)
        if (kOpNames[i] == name)
            return static_cast<AugmentOp>(i);
    throw UsageError("unknown augmentation '" + std::string(name) + "'");
}

bool is_geometric(AugmentOp op)
{
    return op != AugmentOp::gauss_noise && op != AugmentOp::gauss_blur;
}

AugmentPolicy AugmentPolicy::uniform(double p)
{
    AugmentPolicy policy;
    policy.probability.fill(p);
    return policy;
}

void AugmentPolicy::validate() const
{
    for (double v : probability)
        if (!(v >= 0 && v <= 1))
            throw ConfigError("augmentation probabilities must lie in [0, 1]");
    if (rotate_max_deg < 0 || !(scale_min > 0 && scale_max >= scale_min) ||
        !(crop_min_fraction > 0 && crop_min_fraction <= 1) || shift_max_fraction < 0 || shift_max_fraction >= 1 ||
        noise_sigma_max < 0 || !(blur_sigma_min > 0 && blur_sigma_max >= blur_sigma_min))
        throw ConfigError("invalid augmentation parameter range");
}

Sample hflip(const Sample& s)
{
    Sample out = s;
    for (int r = 0; r < s.image.height; ++r) {
        for (int c = 0; c < s.image.width; ++c) {
            out.image.at(r, c) = s.image.at(r, s.image.width - 1 - c);
            out.mask.bits.at(r, c) = s.mask.bits.at(r, s.image.width - 1 - c);
        }
    }
    return out;
}

Sample vflip(const Sample& s)
{
    Sample out = s;
    for (int r = 0; r < s.image.height; ++r) {
        for (int c = 0; c < s.image.width; ++c) {
            out.image.at(r, c) = s.image.at(s.image.height - 1 - r, c);
            out.mask.bits.at(r, c) = s.mask.bits.at(s.image.height - 1 - r, c);
        }
    }
    return out;
}

Sample rotate(const Sample& s, double degrees)
{
    const double a = degrees * std::numbers::pi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double cr = (s.image.height - 1) / 2.0, cc = (s.image.width - 1) / 2.0;
    return resample(s, [=](double r, double c) {
        const double y = r - cr, x = c - cc;
        return std::pair{cr + ca * y - sa * x, cc + sa * y + ca * x};
    });
}

Sample scale(const Sample& s, double factor)
{
    if (!(factor > 0))
        throw UsageError("scale factor must be positive");
    const double cr = (s.image.height - 1) / 2.0, cc = (s.image.width - 1) / 2.0;
    return resample(s, [=](double r, double c) { return std::pair{cr + (r - cr) / factor, cc + (c - cc) / factor}; });
}

Sample crop(const Sample& s, int top, int left, int h, int w)
{
    Sample out = s;
    for (int r = 0; r < s.image.height; ++r) {
        for (int c = 0; c < s.image.width; ++c) {
            if (r >= top && r < top + h && c >= left && c < left + w)
                continue;
            out.image.at(r, c) = kImageFill;
            out.mask.bits.at(r, c) = 0;
        }
    }
    return out;
}

Sample shift(const Sample& s, int dy, int dx)
{
    Sample out = s;
    for (int r = 0; r < s.image.height; ++r) {
        for (int c = 0; c < s.image.width; ++c) {
            const int sr = r - dy, sc = c - dx;
            const bool inside = sr >= 0 && sr < s.image.height && sc >= 0 && sc < s.image.width;
            out.image.at(r, c) = inside ? s.image.at(sr, sc) : kImageFill;
            out.mask.bits.at(r, c) = inside ? s.mask.bits.at(sr, sc) : 0;
        }
    }
    return out;
}

Sample gauss_noise(const Sample& s, double sigma, Rng& rng)
{
    Sample out = s;
    for (float& v : out.image.values)
        v = static_cast<float>(std::clamp(v + sigma * rng.normal(), 0.0, 1.0));
    return out;
}

Sample gauss_blur(const Sample& s, double sigma)
{
    if (!(sigma > 0))
        throw UsageError("blur sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0;
    for (int i = -radius; i <= radius; ++i)
        norm += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& k : kernel)
        k /= norm;

    const int h = s.image.height, w = s.image.width;
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * s.image.at(r, std::clamp(c + i, 0, w - 1));
            tmp[static_cast<std::size_t>(r) * w + c] = acc;
        }
    Sample out = s;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp[static_cast<std::size_t>(std::clamp(r + i, 0, h - 1)) * w + c];
            out.image.at(r, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
    return out;
}

Sample augment(const Sample& s, AugmentOp op, Rng& rng, const AugmentPolicy& policy)
{
    const int h = s.image.height, w = s.image.width;
    switch (op) {
    case AugmentOp::hflip: return hflip(s);
    case AugmentOp::vflip: return vflip(s);
    case AugmentOp::rotate: return rotate(s, rng.uniform(-policy.rotate_max_deg, policy.rotate_max_deg));
    case AugmentOp::scale: return scale(s, rng.uniform(policy.scale_min, policy.scale_max));
    case AugmentOp::crop: {
        const double frac = rng.uniform(policy.crop_min_fraction, 1.0);
        const int ch = std::max(1, static_cast<int>(std::lround(frac * h)));
        const int cw = std::max(1, static_cast<int>(std::lround(frac * w)));
        const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - ch + 1)));
        const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - cw + 1)));
        return crop(s, top, left, ch, cw);
    }
    case AugmentOp::shift: {
        const double m = policy.shift_max_fraction;
        const int dy = static_cast<int>(std::lround(rng.uniform(-m, m) * h));
        const int dx = static_cast<int>(std::lround(rng.uniform(-m, m) * w));
        return shift(s, dy, dx);
    }
    case AugmentOp::gauss_noise: return gauss_noise(s, rng.uniform(0.0, policy.noise_sigma_max), rng);
    case AugmentOp::gauss_blur: return gauss_blur(s, rng.uniform(policy.blur_sigma_min, policy.blur_sigma_max));
    }
    throw UsageError("unknown augmentation op");
}

AugmentResult random_augment(const Sample& s, Rng& rng, const AugmentPolicy& policy)
{
    AugmentResult result{s, {}};
    for (AugmentOp op : kAugmentOrder) {
        if (!rng.bernoulli(policy.p(op)))
            continue;
        result.sample = augment(result.sample, op, rng, policy);
        result.applied.push_back(op);
    }
    return result;
}

} // namespace vseg
