#include "vseg/loss.hpp"

#include <algorithm>
#include <cmath>

#include "vseg/errors.hpp"
#include "vseg/ops.hpp"

namespace vseg {

DiceMode parse_dice_mode(std::string_view name)
{
    if (name == "log")
        return DiceMode::log;
    if (name == "linear")
        return DiceMode::linear;
    throw ConfigError("unknown dice_mode '" + std::string(name) + "'");
}

std::string_view to_string(DiceMode mode)
{
    return mode == DiceMode::log ? "log" : "linear";
}

void LossConfig::validate() const
{
    if (!(epsilon_clamp > 0 && epsilon_clamp < 0.5))
        throw ConfigError("epsilon_clamp must lie in (0, 0.5)");
    if (!(l2_coefficient >= 0))
        throw ConfigError("l2_coefficient must be >= 0");
}

namespace {

template <typename T>
void require_same_shape(const Variable<T>& pred, const Tensor<T>& target, const char* op)
{
    if (pred.shape() != target.shape())
        throw DimensionError(std::string(op) + ": prediction " + shape_string(pred.shape()) + " vs target " +
                             shape_string(target.shape()));
}

} // namespace

template <typename T>
Variable<T> bce(GradTape<T>& tape, const Variable<T>& pred, const Tensor<T>& target, double epsilon_clamp)
{
    require_same_shape(pred, target, "bce");
    const double lo = epsilon_clamp, hi = 1.0 - epsilon_clamp;
    const auto p = pred.value().values();
    const auto y = target.values();
    const double n = static_cast<double>(p.size());
    double acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(static_cast<double>(p[i]), lo, hi);
        acc -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
    }
    const bool grad = tape.recording() && pred.requires_grad();
    Variable<T> result(Tensor<T>(Shape{1}, static_cast<T>(acc / n)), grad);
    if (grad) {
        tape.record("bce", [pred, target, result, lo, hi, n]() mutable {
            const double g = result.grad_buffer()[0];
            const auto p = pred.value().values();
            const auto y = target.values();
            Tensor<T>& dp = pred.grad_buffer();
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double q = p[i];
                if (q < lo || q > hi)
                    continue;
                dp[i] += static_cast<T>(g * (-(y[i] / q) + (1.0 - y[i]) / (1.0 - q)) / n);
            }
        });
    }
    return result;
}

template <typename T>
Variable<T> soft_dice(GradTape<T>& tape, const Variable<T>& pred, const Tensor<T>& target)
{
    require_same_shape(pred, target, "soft_dice");
    const auto p = pred.value().values();
    const auto y = target.values();
    double inter = 0, sum_p = 0, sum_y = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += static_cast<double>(p[i]) * y[i];
        sum_p += p[i];
        sum_y += y[i];
    }
    const double denom = sum_p + sum_y;
    const double dsc = denom > 0 ? 2.0 * inter / denom : 1.0;

    const bool grad = tape.recording() && pred.requires_grad();
    Variable<T> result(Tensor<T>(Shape{1}, static_cast<T>(dsc)), grad);
    if (grad && denom > 0) {
        tape.record("soft_dice", [pred, target, result, dsc, denom]() mutable {
            const double g = result.grad_buffer()[0];
            const auto y = target.values();
            Tensor<T>& dp = pred.grad_buffer();
            for (std::size_t i = 0; i < y.size(); ++i)
                dp[i] += static_cast<T>(g * (2.0 * y[i] - dsc) / denom);
        });
    }
    return result;
}

template <typename T>
Variable<T> dice_term(GradTape<T>& tape, const Variable<T>& dsc, DiceMode mode, double epsilon_clamp)
{
    if (dsc.numel() != 1)
        throw DimensionError("dice_term: expected a scalar");
    const double d = dsc.value()[0];
    const double value =
        mode == DiceMode::log ? std::log(1.0 - d + epsilon_clamp) - std::log(epsilon_clamp) : 1.0 - d;
    const bool grad = tape.recording() && dsc.requires_grad();
    Variable<T> result(Tensor<T>(Shape{1}, static_cast<T>(value)), grad);
    if (grad) {
        tape.record("dice_term", [dsc, result, mode, epsilon_clamp, d]() mutable {
            const double g = result.grad_buffer()[0];
            const double slope = mode == DiceMode::log ? -1.0 / (1.0 - d + epsilon_clamp) : -1.0;
            dsc.grad_buffer()[0] += static_cast<T>(g * slope);
        });
    }
    return result;
}

template <typename T>
Variable<T> l2_penalty(GradTape<T>& tape, const Network<T>& network, double lambda)
{
    if (!(lambda >= 0))
        throw ConfigError("l2 coefficient must be >= 0");
    std::vector<Variable<T>> weights;
    double acc = 0;
    for (const auto& p : network.params()) {
        if (!p.weight_decay)
            continue;
        weights.push_back(p.value);
        for (T w : p.value.value().values())
            acc += static_cast<double>(w) * w;
    }
    const bool grad = tape.recording() && lambda > 0 && !weights.empty();
    Variable<T> result(Tensor<T>(Shape{1}, static_cast<T>(lambda * acc)), grad);
    if (grad) {
        tape.record("l2_penalty", [weights = std::move(weights), result, lambda]() mutable {
            const double g = result.grad_buffer()[0];
            for (auto& w : weights) {
                if (!w.requires_grad())
                    continue;
                const auto v = w.value().values();
                Tensor<T>& dw = w.grad_buffer();
                for (std::size_t i = 0; i < v.size(); ++i)
                    dw[i] += static_cast<T>(2.0 * lambda * g * v[i]);
            }
        });
    }
    return result;
}

template <typename T>
BranchLoss<T> branch_loss(GradTape<T>& tape, const Variable<T>& pred, const Tensor<T>& target,
                          const Network<T>* network, const LossConfig& cfg)
{
    cfg.validate();
    BranchLoss<T> out;
    out.bce = bce(tape, pred, target, cfg.epsilon_clamp);
    out.dice_term = dice_term(tape, soft_dice(tape, pred, target), cfg.dice_mode, cfg.epsilon_clamp);
    std::vector<Variable<T>> terms{out.bce, out.dice_term};
    if (network) {
        out.l2 = l2_penalty(tape, *network, cfg.l2_coefficient);
        terms.push_back(out.l2);
    } else {
        out.l2 = Variable<T>(Tensor<T>(Shape{1}, T(0)));
    }
    const std::vector<double> ones(terms.size(), 1.0);
    out.total = weighted_sum<T>(tape, terms, ones);
    return out;
}

template <typename T>
HybridLoss<T> hybrid_loss(GradTape<T>& tape, const ForwardOutput<T>& outputs, const Tensor<T>& target,
                          const Network<T>& network, const LossConfig& cfg)
{
    std::vector<BranchLoss<T>> branches;
    branches.push_back(branch_loss(tape, outputs.final, target, &network, cfg));
    for (const auto& side : outputs.side_outputs)
        branches.push_back(branch_loss<T>(tape, side, target, nullptr, cfg));

    const double s = static_cast<double>(branches.size());
    HybridLoss<T> out;
    std::vector<Variable<T>> totals;
    for (const auto& b : branches) {
        totals.push_back(b.total);
        out.breakdown.per_branch.push_back(b.total.value()[0]);
        out.breakdown.bce += b.bce.value()[0] / s;
        out.breakdown.dice_term += b.dice_term.value()[0] / s;
    }
    out.breakdown.l2 = branches.front().l2.value()[0];
    const std::vector<double> weights(totals.size(), 1.0 / s);
    out.total = weighted_sum<T>(tape, totals, weights);
    out.breakdown.total = out.total.value()[0];
    return out;
}

double bce_value(std::span<const float> pred, std::span<const float> target, double epsilon_clamp)
{
    if (pred.size() != target.size())
        throw DimensionError("bce: size mismatch");
    double acc = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double q = std::clamp(static_cast<double>(pred[i]), epsilon_clamp, 1.0 - epsilon_clamp);
        acc -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
    }
    return acc / static_cast<double>(pred.size());
}

double soft_dice_value(std::span<const float> pred, std::span<const float> target)
{
    if (pred.size() != target.size())
        throw DimensionError("soft_dice: size mismatch");
    double inter = 0, denom = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += static_cast<double>(pred[i]) * target[i];
        denom += static_cast<double>(pred[i]) + target[i];
    }
    return denom > 0 ? 2.0 * inter / denom : 1.0;
}

#define VSEG_INSTANTIATE_LOSS(T)                                                                                 \
    template Variable<T> bce(GradTape<T>&, const Variable<T>&, const Tensor<T>&, double);                      \
    template Variable<T> soft_dice(GradTape<T>&, const Variable<T>&, const Tensor<T>&);                        \
    template Variable<T> dice_term(GradTape<T>&, const Variable<T>&, DiceMode, double);                        \
    template Variable<T> l2_penalty(GradTape<T>&, const Network<T>&, double);                                  \
    template BranchLoss<T> branch_loss(GradTape<T>&, const Variable<T>&, const Tensor<T>&, const Network<T>*,  \
                                       const LossConfig&);                                                      \
    template HybridLoss<T> hybrid_loss(GradTape<T>&, const ForwardOutput<T>&, const Tensor<T>&,                \
                                       const Network<T>&, const LossConfig&);

VSEG_INSTANTIATE_LOSS(float)
VSEG_INSTANTIATE_LOSS(double)

} // namespace vseg
