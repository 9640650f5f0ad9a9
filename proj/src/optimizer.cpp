#include "vseg/optimizer.hpp"

#include <cmath>

#include "vseg/errors.hpp"

namespace vseg {

void rmsprop_step(Tensor<float>& param, const Tensor<float>& grad, Tensor<float>& mean_square,
                  const RmsPropConfig& cfg)
{
    if (param.shape() != grad.shape() || param.shape() != mean_square.shape())
        throw DimensionError("rmsprop_step: parameter, gradient and accumulator shapes differ");
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double g = grad[i];
        const double v = cfg.alpha * mean_square[i] + (1.0 - cfg.alpha) * g * g;
        mean_square[i] = static_cast<float>(v);
        param[i] = static_cast<float>(param[i] - cfg.lr * g / (std::sqrt(v) + cfg.eps));
    }
}

void RmsProp::step(Network<float>& network)
{
    for (auto& p : network.params()) {
        if (!p.value.has_grad())
            continue;
        auto it = mean_square_.find(p.name);
        if (it == mean_square_.end())
            it = mean_square_.emplace(p.name, Tensor<float>(p.value.shape())).first;
        rmsprop_step(p.value.mutable_value(), p.value.grad_buffer(), it->second, cfg_);
    }
}

} // namespace vseg
