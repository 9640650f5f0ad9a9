#pragma once

#include <cstdint>
#include <vector>

namespace vseg {

// Physical pixel size in millimetres.
struct Spacing {
    double row_mm = 0.3;
    double col_mm = 0.3;

    friend bool operator==(const Spacing&, const Spacing&) = default;
};

// Row-major single-channel grid.
template <typename T>
struct Raster {
    int height = 0;
    int width = 0;
    std::vector<T> values;

    Raster() = default;
    Raster(int h, int w, T fill = T{}) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    std::size_t size() const { return values.size(); }
    T& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
    const T& at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
    template <typename U>
    bool same_shape(const Raster<U>& o) const
    {
        return height == o.height && width == o.width;
    }

    friend bool operator==(const Raster&, const Raster&) = default;
};

// Grayscale intensities in [0,1].
using Image = Raster<float>;
// Per-pixel foreground probability in [0,1].
using ProbabilityMap = Raster<float>;

struct BinaryMask {
    Raster<std::uint8_t> bits; // 0 or 1
    Spacing spacing;

    BinaryMask() = default;
    BinaryMask(int h, int w, Spacing s = {}) : bits(h, w, 0), spacing(s) {}

    int height() const { return bits.height; }
    int width() const { return bits.width; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }

    // Throws ConfigError on non-binary values or spacing outside (0, 10) mm.
    void validate() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

} // namespace vseg
