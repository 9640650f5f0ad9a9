#pragma once

#include <map>
#include <string>

#include "vseg/arch.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

struct RmsPropConfig {
    double lr = 1e-4;
    double alpha = 0.9;
    double eps = 1e-8;
};

// v <- alpha*v + (1-alpha)*g^2 ; param <- param - lr*g/(sqrt(v)+eps)
void rmsprop_step(Tensor<float>& param, const Tensor<float>& grad, Tensor<float>& mean_square,
                  const RmsPropConfig& cfg);

class RmsProp {
public:
    explicit RmsProp(RmsPropConfig cfg = {}) : cfg_(cfg) {}

    // Updates every parameter that has a gradient; accumulators are created
    // on first use.
    void step(Network<float>& network);

    RmsPropConfig& config() noexcept { return cfg_; }
    std::map<std::string, Tensor<float>>& state() noexcept { return mean_square_; }
    const std::map<std::string, Tensor<float>>& state() const noexcept { return mean_square_; }

private:
    RmsPropConfig cfg_;
    std::map<std::string, Tensor<float>> mean_square_;
};

} // namespace vseg
