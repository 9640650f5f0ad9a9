#pragma once

#include <cstdint>
#include <string>

#include "vseg/sample.hpp"

namespace vseg {

struct SynthConfig {
    int size = 64;
    int branch_depth = 3;
    double vessel_width_min = 2.0; // pixels, at the leaves
    double vessel_width_max = 4.5; // pixels, at the root
    double noise_sigma = 0.04;
    double illumination_gradient = 0.2;
    double background = 0.85;
    double vessel = 0.3;
    Spacing spacing{0.3, 0.3};
    std::uint64_t seed = 0;

    void validate() const; // ConfigError
};

// Branching vessel tree rendered dark on a bright background, with a linear
// illumination ramp and additive Gaussian noise. Pure function of config.
Sample generate(const SynthConfig& config, const std::string& id = "synthetic",
                const std::string& patient_id = "P0000");

} // namespace vseg
