#pragma once

#include <array>
#include <cstdint>

#include "vseg/image.hpp"

namespace vseg {

// 256 bins over [0,1]; bin k covers [k/256, (k+1)/256), the last bin is
// closed so 1.0 lands in bin 255.
struct Histogram256 {
    std::array<std::uint64_t, 256> bins{};

    static int bin_of(float value);
    std::uint64_t total() const;
};

Histogram256 histogram256(const ProbabilityMap& map);

struct OtsuResult {
    double threshold = 0.5;
    int bin = -1;            // k*, the last bin of the lower class; -1 when degenerate
    bool degenerate = false; // every pixel fell into one bin
};

// Maximises w0*w1*(mu0-mu1)^2 over the split after each bin k in 0..254 and
// returns (k*+1)/256. Ties go to the lower bin. Throws UsageError on an empty
// map.
OtsuResult otsu_threshold(const ProbabilityMap& map);

// value >= threshold -> 1.
BinaryMask binarize(const ProbabilityMap& map, double threshold, Spacing spacing = {});

} // namespace vseg
