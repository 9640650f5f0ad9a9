#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "vseg/rng.hpp"
#include "vseg/sample.hpp"

namespace vseg {

// Application order of random_augment: geometric first, then intensity.
enum class AugmentOp { hflip, vflip, rotate, scale, crop, shift, gauss_noise, gauss_blur };

inline constexpr std::array<AugmentOp, 8> kAugmentOrder = {
    AugmentOp::hflip, AugmentOp::vflip,  AugmentOp::rotate,      AugmentOp::scale,
    AugmentOp::crop,  AugmentOp::shift,  AugmentOp::gauss_noise, AugmentOp::gauss_blur,
};

std::string_view to_string(AugmentOp op);
AugmentOp parse_augment_op(std::string_view name); // UsageError on unknown names
bool is_geometric(AugmentOp op);

struct AugmentPolicy {
    std::array<double, 8> probability{}; // indexed by AugmentOp; all zero = identity
    double rotate_max_deg = 15.0;
    double scale_min = 0.9, scale_max = 1.1;
    double crop_min_fraction = 0.8; // side of the kept window relative to the image
    double shift_max_fraction = 0.1;
    double noise_sigma_max = 0.05;
    double blur_sigma_min = 0.5, blur_sigma_max = 1.0;

    double& p(AugmentOp op) { return probability[static_cast<std::size_t>(op)]; }
    double p(AugmentOp op) const { return probability[static_cast<std::size_t>(op)]; }

    static AugmentPolicy disabled() { return {}; }
    // Every op at probability `p`.
    static AugmentPolicy uniform(double p);
    void validate() const; // ConfigError
};

// Explicit-parameter transforms. Geometric ones move image and mask together
// (image bilinear with fill 1.0, mask nearest with fill 0); intensity ones
// touch the image only.
Sample hflip(const Sample& s);
Sample vflip(const Sample& s);
Sample rotate(const Sample& s, double degrees);
Sample scale(const Sample& s, double factor);
// Keeps the window [top, top+h) x [left, left+w) in place and fills the rest
// with background.
Sample crop(const Sample& s, int top, int left, int h, int w);
Sample shift(const Sample& s, int dy, int dx);
Sample gauss_noise(const Sample& s, double sigma, Rng& rng);
Sample gauss_blur(const Sample& s, double sigma);

// One op with parameters drawn from `policy` ranges.
Sample augment(const Sample& s, AugmentOp op, Rng& rng, const AugmentPolicy& policy = AugmentPolicy::uniform(1.0));

struct AugmentResult {
    Sample sample;
    std::vector<AugmentOp> applied;
};

// Each op fires independently with its policy probability, in kAugmentOrder.
AugmentResult random_augment(const Sample& s, Rng& rng, const AugmentPolicy& policy);

} // namespace vseg
