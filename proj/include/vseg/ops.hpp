#pragma once

#include <span>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

enum class NormMode { train, eval };

// Running statistics of one batch-norm layer. Not differentiable.
template <typename T>
struct BatchNormState {
    explicit BatchNormState(int channels = 0)
        : running_mean(Shape{channels > 0 ? channels : 1}, T(0)),
          running_var(Shape{channels > 0 ? channels : 1}, T(1))
    {
    }

    Tensor<T> running_mean;
    Tensor<T> running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;
};

// Cross-correlation (no kernel flip) with zero padding. `bias` may be an
// undefined Variable. input [B,Cin,H,W], weight [Cout,Cin,kh,kw].
template <typename T>
Variable<T> conv2d(GradTape<T>& tape, const Variable<T>& input, const Variable<T>& weight,
                   const Variable<T>& bias, int stride = 1, int padding = 0);

// Per-channel normalization over (B,H,W). Train mode uses batch statistics
// and updates `state`; eval mode reads the running statistics.
template <typename T>
Variable<T> batch_norm(GradTape<T>& tape, const Variable<T>& input, const Variable<T>& gamma,
                       const Variable<T>& beta, BatchNormState<T>& state, NormMode mode);

// Gradient at exactly 0 is 0.
template <typename T>
Variable<T> relu(GradTape<T>& tape, const Variable<T>& input);

template <typename T>
Variable<T> sigmoid(GradTape<T>& tape, const Variable<T>& input);

// Backward routes to the first maximum in scan order.
template <typename T>
Variable<T> max_pool2d(GradTape<T>& tape, const Variable<T>& input, int window, int stride);

// Half-pixel-centre bilinear resampling with border clamping.
template <typename T>
Variable<T> upsample_bilinear(GradTape<T>& tape, const Variable<T>& input, int factor);

template <typename T>
Variable<T> concat_channels(GradTape<T>& tape, std::span<const Variable<T>> inputs);

template <typename T>
Variable<T> slice_channels(GradTape<T>& tape, const Variable<T>& input, int begin, int count);

// Scalar sum of all elements.
template <typename T>
Variable<T> sum(GradTape<T>& tape, const Variable<T>& input);

// Σ weights[i] * terms[i] over scalar terms.
template <typename T>
Variable<T> weighted_sum(GradTape<T>& tape, std::span<const Variable<T>> terms, std::span<const double> weights);

} // namespace vseg
