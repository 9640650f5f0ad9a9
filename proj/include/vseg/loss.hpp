#pragma once

#include <string_view>
#include <vector>

#include "vseg/arch.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

enum class DiceMode { log, linear };

DiceMode parse_dice_mode(std::string_view name);
std::string_view to_string(DiceMode mode);

struct LossConfig {
    double epsilon_clamp = 1e-7;
    double l2_coefficient = 1e-4;
    DiceMode dice_mode = DiceMode::log;

    void validate() const; // ConfigError
};

struct LossBreakdown {
    double total = 0;
    double bce = 0;       // mean over branches
    double dice_term = 0; // mean over branches
    double l2 = 0;        // raw penalty, counted once (final branch)
    std::vector<double> per_branch; // final first, then side outputs
};

// Mean binary cross-entropy with predictions clamped to [eps, 1-eps].
template <typename T>
Variable<T> bce(GradTape<T>& tape, const Variable<T>& pred, const Tensor<T>& target, double epsilon_clamp);

// 2*sum(p*y) / (sum(p) + sum(y)); 1 when both sums are zero.
template <typename T>
Variable<T> soft_dice(GradTape<T>& tape, const Variable<T>& pred, const Tensor<T>& target);

// log(1 - dsc + eps) - log(eps) in log mode, 1 - dsc in linear mode.
template <typename T>
Variable<T> dice_term(GradTape<T>& tape, const Variable<T>& dsc, DiceMode mode, double epsilon_clamp);

// lambda * sum of squared conv weights.
template <typename T>
Variable<T> l2_penalty(GradTape<T>& tape, const Network<T>& network, double lambda);

template <typename T>
struct BranchLoss {
    Variable<T> total, bce, dice_term, l2;
};

// bce + dice_term (+ l2 when `network` is non-null).
template <typename T>
BranchLoss<T> branch_loss(GradTape<T>& tape, const Variable<T>& pred, const Tensor<T>& target,
                          const Network<T>* network, const LossConfig& cfg);

template <typename T>
struct HybridLoss {
    Variable<T> total;
    LossBreakdown breakdown;
};

// Mean of the branch losses over the final map and every side output; the L2
// penalty enters once, through the final branch.
template <typename T>
HybridLoss<T> hybrid_loss(GradTape<T>& tape, const ForwardOutput<T>& outputs, const Tensor<T>& target,
                          const Network<T>& network, const LossConfig& cfg);

// Value-only helpers.
double bce_value(std::span<const float> pred, std::span<const float> target, double epsilon_clamp);
double soft_dice_value(std::span<const float> pred, std::span<const float> target);

} // namespace vseg
