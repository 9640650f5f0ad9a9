#pragma once

#include <string>

#include "vseg/image.hpp"

namespace vseg {

// Paired angiogram and vessel annotation. The mask carries the pixel spacing.
struct Sample {
    std::string id;
    Image image;
    BinaryMask mask;
    std::string patient_id;
    std::string view_tag; // e.g. "LCA-LAO"

    const Spacing& spacing() const { return mask.spacing; }
    void validate() const; // DimensionError / ConfigError

    friend bool operator==(const Sample&, const Sample&) = default;
};

} // namespace vseg
