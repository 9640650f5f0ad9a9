#include "vseg/postproc.hpp"

#include <algorithm>
#include <cmath>

#include "vseg/errors.hpp"

namespace vseg {

int Histogram256::bin_of(float value)
{
    const int k = static_cast<int>(std::floor(static_cast<double>(value) * 256.0));
    return std::clamp(k, 0, 255);
}

std::uint64_t Histogram256::total() const
{
    std::uint64_t n = 0;
    for (auto b : bins)
        n += b;
    return n;
}

Histogram256 histogram256(const ProbabilityMap& map)
{
    Histogram256 h;
    for (float v : map.values)
        ++h.bins[static_cast<std::size_t>(Histogram256::bin_of(v))];
    return h;
}

OtsuResult otsu_threshold(const ProbabilityMap& map)
{
    if (map.values.empty())
        throw UsageError("otsu_threshold: empty probability map");
    const Histogram256 hist = histogram256(map);
    const std::uint64_t total = hist.total();

    std::uint64_t occupied = 0;
    for (auto b : hist.bins)
        occupied += b > 0 ? 1 : 0;
    if (occupied <= 1)
        return {0.5, -1, true};

    std::uint64_t sum_all = 0;
    for (std::size_t k = 0; k < 256; ++k)
        sum_all += k * hist.bins[k];

    // w0*w1*(mu0-mu1)^2 = (n1*s0 - n0*s1)^2 / (n0*n1*N^2). The N^2 factor is
    // common to every split, so candidates are compared as exact fractions
    // d^2/(n0*n1) by cross-multiplication. Up to 2^18 pixels (512x512) every
    // product fits in 128 bits; larger maps fall back to long double.
    using u128 = unsigned __int128;
    const bool exact = total <= (std::uint64_t{1} << 18);
    std::uint64_t n0 = 0, s0 = 0;
    u128 best_num = 0, best_den = 1;
    long double best_approx = -1;
    int best_bin = -1;
    for (int k = 0; k < 255; ++k) {
        n0 += hist.bins[static_cast<std::size_t>(k)];
        s0 += static_cast<std::uint64_t>(k) * hist.bins[static_cast<std::size_t>(k)];
        const std::uint64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0)
            continue;
        const std::uint64_t s1 = sum_all - s0;
        const u128 a = static_cast<u128>(n1) * s0, b = static_cast<u128>(n0) * s1;
        const u128 d = a > b ? a - b : b - a;
        const u128 num = d * d, den = static_cast<u128>(n0) * n1;
        bool better;
        if (exact) {
            better = best_bin < 0 || num * best_den > best_num * den;
        } else {
            const long double v = static_cast<long double>(num) / static_cast<long double>(den);
            better = v > best_approx;
            if (better)
                best_approx = v;
        }
        if (better) {
            best_num = num;
            best_den = den;
            best_bin = k;
        }
    }
    return {(best_bin + 1) / 256.0, best_bin, false};
}

BinaryMask binarize(const ProbabilityMap& map, double threshold, Spacing spacing)
{
    BinaryMask out(map.height, map.width, spacing);
    for (std::size_t i = 0; i < map.values.size(); ++i)
        out.bits.values[i] = map.values[i] >= threshold ? 1 : 0;
    return out;
}

} // namespace vseg
