#include "vseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

#include <Eigen/Core>

#include "vseg/errors.hpp"

namespace vseg {
namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
bool tracks(const GradTape<T>& tape, std::initializer_list<const Variable<T>*> inputs)
{
    if (!tape.recording())
        return false;
    for (const auto* v : inputs)
        if (v->defined() && v->requires_grad())
            return true;
    return false;
}

template <typename T>
void require_rank4(const Variable<T>& x, const char* op)
{
    if (!x.defined() || x.value().rank() != 4)
        throw DimensionError(std::string(op) + ": expected a 4-D tensor, got " +
                             (x.defined() ? shape_string(x.shape()) : std::string("undefined")));
}

struct ConvGeometry {
    int batch, in_channels, height, width;
    int out_channels, kh, kw;
    int stride, padding;
    int out_h, out_w;

    int patch() const { return in_channels * kh * kw; }
    int out_area() const { return out_h * out_w; }
};

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col)
{
    const int area = g.out_area();
    for (int c = 0; c < g.in_channels; ++c) {
        const T* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                T* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * area;
                for (int oh = 0; oh < g.out_h; ++oh) {
                    const int ih = oh * g.stride - g.padding + ki;
                    T* dst = row + static_cast<std::size_t>(oh) * g.out_w;
                    if (ih < 0 || ih >= g.height) {
                        std::fill(dst, dst + g.out_w, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(ih) * g.width;
                    for (int ow = 0; ow < g.out_w; ++ow) {
                        const int iw = ow * g.stride - g.padding + kj;
                        dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* image)
{
    const int area = g.out_area();
    for (int c = 0; c < g.in_channels; ++c) {
        T* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                const T* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * area;
                for (int oh = 0; oh < g.out_h; ++oh) {
                    const int ih = oh * g.stride - g.padding + ki;
                    if (ih < 0 || ih >= g.height)
                        continue;
                    const T* src = row + static_cast<std::size_t>(oh) * g.out_w;
                    T* dst = plane + static_cast<std::size_t>(ih) * g.width;
                    for (int ow = 0; ow < g.out_w; ++ow) {
                        const int iw = ow * g.stride - g.padding + kj;
                        if (iw >= 0 && iw < g.width)
                            dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

// Mean of the channel plane c over all batches, accumulated in double.
template <typename T>
double channel_mean(const Tensor<T>& t, int c)
{
    const int b = t.dim(0), channels = t.dim(1);
    const std::size_t area = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
    double acc = 0;
    for (int n = 0; n < b; ++n) {
        const T* p = t.data() + (static_cast<std::size_t>(n) * channels + c) * area;
        for (std::size_t i = 0; i < area; ++i)
            acc += p[i];
    }
    return acc / static_cast<double>(b * area);
}

} // namespace

template <typename T>
Variable<T> conv2d(GradTape<T>& tape, const Variable<T>& input, const Variable<T>& weight,
                   const Variable<T>& bias, int stride, int padding)
{
    require_rank4(input, "conv2d");
    require_rank4(weight, "conv2d weight");
    if (stride < 1 || padding < 0)
        throw ConfigError("conv2d: stride must be >= 1 and padding >= 0");

    ConvGeometry g{};
    g.batch = input.value().dim(0);
    g.in_channels = input.value().dim(1);
    g.height = input.value().dim(2);
    g.width = input.value().dim(3);
    g.out_channels = weight.value().dim(0);
    g.kh = weight.value().dim(2);
    g.kw = weight.value().dim(3);
    g.stride = stride;
    g.padding = padding;

    if (weight.value().dim(1) != g.in_channels)
        throw DimensionError("conv2d: input has " + std::to_string(g.in_channels) +
                             " channels but weight expects " + std::to_string(weight.value().dim(1)));
    if (g.kh % 2 == 0 || g.kw % 2 == 0)
        throw DimensionError("conv2d: kernel extents must be odd");
    if (g.height + 2 * padding < g.kh || g.width + 2 * padding < g.kw)
        throw DimensionError("conv2d: kernel larger than padded input");
    if (bias.defined() && (bias.value().rank() != 1 || bias.value().dim(0) != g.out_channels))
        throw DimensionError("conv2d: bias must have shape [Cout]");

    g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
    g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

    const std::size_t in_plane = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
    const std::size_t out_plane = static_cast<std::size_t>(g.out_channels) * g.out_area();

    Tensor<T> out(Shape{g.batch, g.out_channels, g.out_h, g.out_w});
    RowMajor<T> col(g.patch(), g.out_area());
    Eigen::Map<const RowMajor<T>> w(weight.value().data(), g.out_channels, g.patch());
    for (int n = 0; n < g.batch; ++n) {
        im2col(input.value().data() + n * in_plane, g, col.data());
        Eigen::Map<RowMajor<T>> y(out.data() + n * out_plane, g.out_channels, g.out_area());
        y.noalias() = w * col;
        if (bias.defined()) {
            for (int o = 0; o < g.out_channels; ++o)
                y.row(o).array() += bias.value()[o];
        }
    }

    const bool grad = tracks(tape, {&input, &weight, &bias});
    Variable<T> result(std::move(out), grad);
    if (grad) {
        tape.record("conv2d", [input, weight, bias, result, g, in_plane, out_plane]() mutable {
            if (!result.has_grad())
                return;
            const Tensor<T>& dy = result.grad_buffer();
            Eigen::Map<const RowMajor<T>> w(weight.value().data(), g.out_channels, g.patch());
            RowMajor<T> col(g.patch(), g.out_area());
            RowMajor<T> dcol;
            for (int n = 0; n < g.batch; ++n) {
                Eigen::Map<const RowMajor<T>> dyn(dy.data() + n * out_plane, g.out_channels, g.out_area());
                if (weight.requires_grad()) {
                    im2col(input.value().data() + n * in_plane, g, col.data());
                    Eigen::Map<RowMajor<T>> dw(weight.grad_buffer().data(), g.out_channels, g.patch());
                    dw.noalias() += dyn * col.transpose();
                }
                if (input.requires_grad()) {
                    dcol.noalias() = w.transpose() * dyn;
                    col2im_add(dcol.data(), g, input.grad_buffer().data() + n * in_plane);
                }
                if (bias.defined() && bias.requires_grad()) {
                    // Plain loop: Eigen's vectorized sum splits by pointer alignment,
                    // which would make the rounding depend on where dy was allocated.
                    Tensor<T>& db = bias.grad_buffer();
                    for (int o = 0; o < g.out_channels; ++o) {
                        const T* row = dy.data() + n * out_plane + static_cast<std::size_t>(o) * g.out_area();
                        double acc = 0;
                        for (int k = 0; k < g.out_area(); ++k)
                            acc += row[k];
                        db[o] += static_cast<T>(acc);
                    }
                }
            }
        });
    }
    return result;
}

template <typename T>
Variable<T> batch_norm(GradTape<T>& tape, const Variable<T>& input, const Variable<T>& gamma,
                       const Variable<T>& beta, BatchNormState<T>& state, NormMode mode)
{
    require_rank4(input, "batch_norm");
    if (!(state.epsilon > 0))
        throw ConfigError("batch_norm: epsilon must be positive");
    const Tensor<T>& x = input.value();
    const int batch = x.dim(0), channels = x.dim(1);
    const std::size_t area = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    const std::size_t count = batch * area;
    if (gamma.value().numel() != static_cast<std::size_t>(channels) ||
        beta.value().numel() != static_cast<std::size_t>(channels) ||
        state.running_mean.numel() != static_cast<std::size_t>(channels))
        throw DimensionError("batch_norm: parameter size does not match channel count");
    if (mode == NormMode::train && count < 2)
        throw DimensionError("batch_norm: training mode needs at least 2 values per channel");

    std::vector<T> mean(channels), inv_std(channels);
    for (int c = 0; c < channels; ++c) {
        if (mode == NormMode::train) {
            const double m = channel_mean(x, c);
            double var = 0;
            for (int n = 0; n < batch; ++n) {
                const T* p = x.data() + (static_cast<std::size_t>(n) * channels + c) * area;
                for (std::size_t i = 0; i < area; ++i)
                    var += (p[i] - m) * (p[i] - m);
            }
            var /= static_cast<double>(count);
            mean[c] = static_cast<T>(m);
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + state.epsilon));
            const double unbiased = var * static_cast<double>(count) / static_cast<double>(count - 1);
            state.running_mean[c] =
                static_cast<T>((1 - state.momentum) * state.running_mean[c] + state.momentum * m);
            state.running_var[c] =
                static_cast<T>((1 - state.momentum) * state.running_var[c] + state.momentum * unbiased);
        } else {
            mean[c] = state.running_mean[c];
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + state.epsilon));
        }
    }

    Tensor<T> normalized(x.shape());
    Tensor<T> out(x.shape());
    for (int n = 0; n < batch; ++n) {
        for (int c = 0; c < channels; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * area;
            const T g = gamma.value()[c], b = beta.value()[c];
            for (std::size_t i = 0; i < area; ++i) {
                const T xh = (x[base + i] - mean[c]) * inv_std[c];
                normalized[base + i] = xh;
                out[base + i] = g * xh + b;
            }
        }
    }

    const bool grad = tracks(tape, {&input, &gamma, &beta});
    Variable<T> result(std::move(out), grad);
    if (grad) {
        tape.record("batch_norm", [input, gamma, beta, result, normalized = std::move(normalized),
                                   inv_std = std::move(inv_std), mode, batch, channels, area, count]() mutable {
            if (!result.has_grad())
                return;
            const Tensor<T>& dy = result.grad_buffer();
            for (int c = 0; c < channels; ++c) {
                double sum_dy = 0, sum_dy_xh = 0;
                for (int n = 0; n < batch; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * area;
                    for (std::size_t i = 0; i < area; ++i) {
                        sum_dy += dy[base + i];
                        sum_dy_xh += static_cast<double>(dy[base + i]) * normalized[base + i];
                    }
                }
                if (gamma.requires_grad())
                    gamma.grad_buffer()[c] += static_cast<T>(sum_dy_xh);
                if (beta.requires_grad())
                    beta.grad_buffer()[c] += static_cast<T>(sum_dy);
                if (!input.requires_grad())
                    continue;
                Tensor<T>& dx = input.grad_buffer();
                const T scale = gamma.value()[c] * inv_std[c];
                if (mode == NormMode::eval) {
                    for (int n = 0; n < batch; ++n) {
                        const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * area;
                        for (std::size_t i = 0; i < area; ++i)
                            dx[base + i] += scale * dy[base + i];
                    }
                    continue;
                }
                const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(count));
                const T mean_dy_xh = static_cast<T>(sum_dy_xh / static_cast<double>(count));
                for (int n = 0; n < batch; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * area;
                    for (std::size_t i = 0; i < area; ++i)
                        dx[base + i] += scale * (dy[base + i] - mean_dy - normalized[base + i] * mean_dy_xh);
                }
            }
        });
    }
    return result;
}

template <typename T>
Variable<T> relu(GradTape<T>& tape, const Variable<T>& input)
{
    const Tensor<T>& x = input.value();
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        out[i] = x[i] > T(0) ? x[i] : T(0);

    if (tape.tracking_branches()) {
        std::uint64_t h = 0x72656c75;
        for (std::size_t i = 0; i < x.numel(); ++i)
            h = h * 31 + (x[i] > T(0) ? 1 : 0);
        tape.mix_branch(h);
    }

    const bool grad = tracks(tape, {&input});
    Variable<T> result(std::move(out), grad);
    if (grad) {
        tape.record("relu", [input, result]() mutable {
            if (!result.has_grad())
                return;
            const Tensor<T>& dy = result.grad_buffer();
            const Tensor<T>& x = input.value();
            Tensor<T>& dx = input.grad_buffer();
            for (std::size_t i = 0; i < x.numel(); ++i)
                if (x[i] > T(0))
                    dx[i] += dy[i];
        });
    }
    return result;
}

template <typename T>
Variable<T> sigmoid(GradTape<T>& tape, const Variable<T>& input)
{
    const Tensor<T>& x = input.value();
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const T v = x[i];
        if (v >= T(0)) {
            out[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            out[i] = e / (T(1) + e);
        }
    }

    const bool grad = tracks(tape, {&input});
    Variable<T> result(std::move(out), grad);
    if (grad) {
        tape.record("sigmoid", [input, result]() mutable {
            if (!result.has_grad())
                return;
            const Tensor<T>& dy = result.grad_buffer();
            const Tensor<T>& y = result.value();
            Tensor<T>& dx = input.grad_buffer();
            for (std::size_t i = 0; i < y.numel(); ++i)
                dx[i] += dy[i] * y[i] * (T(1) - y[i]);
        });
    }
    return result;
}

template <typename T>
Variable<T> max_pool2d(GradTape<T>& tape, const Variable<T>& input, int window, int stride)
{
    require_rank4(input, "max_pool2d");
    if (window < 1 || stride < 1)
        throw ConfigError("max_pool2d: window and stride must be positive");
    const Tensor<T>& x = input.value();
    const int batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h < window || w < window)
        throw DimensionError("max_pool2d: window larger than input");
    const int oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;

    Tensor<T> out(Shape{batch, channels, oh, ow});
    std::vector<std::size_t> argmax(out.numel());
    std::size_t o = 0;
    for (int n = 0; n < batch; ++n) {
        for (int c = 0; c < channels; ++c) {
            const std::size_t plane = (static_cast<std::size_t>(n) * channels + c) * h * w;
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j, ++o) {
                    std::size_t best = plane + static_cast<std::size_t>(i * stride) * w + j * stride;
                    for (int di = 0; di < window; ++di) {
                        for (int dj = 0; dj < window; ++dj) {
                            const std::size_t idx = plane + static_cast<std::size_t>(i * stride + di) * w + j * stride + dj;
                            if (x[idx] > x[best])
                                best = idx;
                        }
                    }
                    argmax[o] = best;
                    out[o] = x[best];
                }
            }
        }
    }

    if (tape.tracking_branches()) {
        std::uint64_t sig = 0x706f6f6c;
        for (std::size_t a : argmax)
            sig = sig * 1099511628211ULL + a;
        tape.mix_branch(sig);
    }

    const bool grad = tracks(tape, {&input});
    Variable<T> result(std::move(out), grad);
    if (grad) {
        tape.record("max_pool2d", [input, result, argmax = std::move(argmax)]() mutable {
            if (!result.has_grad())
                return;
            const Tensor<T>& dy = result.grad_buffer();
            Tensor<T>& dx = input.grad_buffer();
            for (std::size_t k = 0; k < argmax.size(); ++k)
                dx[argmax[k]] += dy[k];
        });
    }
    return result;
}

namespace {

// Source taps for one output axis under the half-pixel-centre rule.
struct Tap {
    int lo, hi;
    double frac;
};

std::vector<Tap> bilinear_taps(int in_size, int factor)
{
    std::vector<Tap> taps(static_cast<std::size_t>(in_size) * factor);
    for (std::size_t i = 0; i < taps.size(); ++i) {
        double src = (static_cast<double>(i) + 0.5) / factor - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
        const int lo = static_cast<int>(std::floor(src));
        const int hi = std::min(lo + 1, in_size - 1);
        taps[i] = {lo, hi, src - lo};
    }
    return taps;
}

} // namespace

template <typename T>
Variable<T> upsample_bilinear(GradTape<T>& tape, const Variable<T>& input, int factor)
{
    require_rank4(input, "upsample_bilinear");
    if (factor < 1)
        throw ConfigError("upsample_bilinear: factor must be >= 1");
    const Tensor<T>& x = input.value();
    const int batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
    const bool grad = tracks(tape, {&input});

    if (factor == 1) {
        Variable<T> result(x, grad);
        if (grad) {
            tape.record("upsample_bilinear", [input, result]() mutable {
                if (!result.has_grad())
                    return;
                const Tensor<T>& dy = result.grad_buffer();
                Tensor<T>& dx = input.grad_buffer();
                for (std::size_t i = 0; i < dy.numel(); ++i)
                    dx[i] += dy[i];
            });
        }
        return result;
    }

    const int oh = h * factor, ow = w * factor;
    auto rows = bilinear_taps(h, factor);
    auto cols = bilinear_taps(w, factor);
    Tensor<T> out(Shape{batch, channels, oh, ow});
    for (int p = 0; p < batch * channels; ++p) {
        const T* src = x.data() + static_cast<std::size_t>(p) * h * w;
        T* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
        for (int i = 0; i < oh; ++i) {
            const Tap& r = rows[i];
            const T fr = static_cast<T>(r.frac);
            for (int j = 0; j < ow; ++j) {
                const Tap& c = cols[j];
                const T fc = static_cast<T>(c.frac);
                const T top = src[r.lo * w + c.lo] * (T(1) - fc) + src[r.lo * w + c.hi] * fc;
                const T bottom = src[r.hi * w + c.lo] * (T(1) - fc) + src[r.hi * w + c.hi] * fc;
                dst[i * ow + j] = top * (T(1) - fr) + bottom * fr;
            }
        }
    }

    Variable<T> result(std::move(out), grad);
    if (grad) {
        tape.record("upsample_bilinear", [input, result, rows = std::move(rows), cols = std::move(cols), batch,
                                          channels, h, w, oh, ow]() mutable {
            if (!result.has_grad())
                return;
            const Tensor<T>& dy = result.grad_buffer();
            Tensor<T>& dx = input.grad_buffer();
            for (int p = 0; p < batch * channels; ++p) {
                const T* g = dy.data() + static_cast<std::size_t>(p) * oh * ow;
                T* d = dx.data() + static_cast<std::size_t>(p) * h * w;
                for (int i = 0; i < oh; ++i) {
                    const Tap& r = rows[i];
                    const T fr = static_cast<T>(r.frac);
                    for (int j = 0; j < ow; ++j) {
                        const Tap& c = cols[j];
                        const T fc = static_cast<T>(c.frac);
                        const T v = g[i * ow + j];
                        d[r.lo * w + c.lo] += v * (T(1) - fr) * (T(1) - fc);
                        d[r.lo * w + c.hi] += v * (T(1) - fr) * fc;
                        d[r.hi * w + c.lo] += v * fr * (T(1) - fc);
                        d[r.hi * w + c.hi] += v * fr * fc;
                    }
                }
            }
        });
    }
    return result;
}

template <typename T>
Variable<T> concat_channels(GradTape<T>& tape, std::span<const Variable<T>> inputs)
{
    if (inputs.empty())
        throw UsageError("concat_channels: no inputs");
    for (const auto& v : inputs)
        require_rank4(v, "concat_channels");
    const Shape& first = inputs[0].shape();
    int total = 0;
    for (const auto& v : inputs) {
        const Shape& s = v.shape();
        if (s[0] != first[0] || s[2] != first[2] || s[3] != first[3])
            throw DimensionError("concat_channels: " + shape_string(s) + " does not match " + shape_string(first));
        total += s[1];
    }
    const int batch = first[0];
    const std::size_t area = static_cast<std::size_t>(first[2]) * first[3];

    Tensor<T> out(Shape{batch, total, first[2], first[3]});
    for (int n = 0; n < batch; ++n) {
        T* dst = out.data() + static_cast<std::size_t>(n) * total * area;
        for (const auto& v : inputs) {
            const std::size_t len = static_cast<std::size_t>(v.shape()[1]) * area;
            const T* src = v.value().data() + n * len;
            dst = std::copy(src, src + len, dst);
        }
    }

    bool grad = false;
    if (tape.recording())
        for (const auto& v : inputs)
            grad = grad || v.requires_grad();
    Variable<T> result(std::move(out), grad);
    if (grad) {
        std::vector<Variable<T>> parts(inputs.begin(), inputs.end());
        tape.record("concat_channels", [parts = std::move(parts), result, batch, total, area]() mutable {
            if (!result.has_grad())
                return;
            const Tensor<T>& dy = result.grad_buffer();
            for (int n = 0; n < batch; ++n) {
                const T* src = dy.data() + static_cast<std::size_t>(n) * total * area;
                for (auto& v : parts) {
                    const std::size_t len = static_cast<std::size_t>(v.shape()[1]) * area;
                    if (v.requires_grad()) {
                        T* dst = v.grad_buffer().data() + n * len;
                        for (std::size_t i = 0; i < len; ++i)
                            dst[i] += src[i];
                    }
                    src += len;
                }
            }
        });
    }
    return result;
}

template <typename T>
Variable<T> slice_channels(GradTape<T>& tape, const Variable<T>& input, int begin, int count)
{
    require_rank4(input, "slice_channels");
    const Shape& s = input.shape();
    if (begin < 0 || count < 1 || begin + count > s[1])
        throw DimensionError("slice_channels: range out of bounds");
    const std::size_t area = static_cast<std::size_t>(s[2]) * s[3];
    Tensor<T> out(Shape{s[0], count, s[2], s[3]});
    for (int n = 0; n < s[0]; ++n) {
        const T* src = input.value().data() + (static_cast<std::size_t>(n) * s[1] + begin) * area;
        std::copy(src, src + count * area, out.data() + static_cast<std::size_t>(n) * count * area);
    }
    const bool grad = tracks(tape, {&input});
    Variable<T> result(std::move(out), grad);
    if (grad) {
        tape.record("slice_channels", [input, result, begin, count, area]() mutable {
            if (!result.has_grad())
                return;
            const Tensor<T>& dy = result.grad_buffer();
            Tensor<T>& dx = input.grad_buffer();
            const Shape& s = input.shape();
            for (int n = 0; n < s[0]; ++n) {
                T* dst = dx.data() + (static_cast<std::size_t>(n) * s[1] + begin) * area;
                const T* src = dy.data() + static_cast<std::size_t>(n) * count * area;
                for (std::size_t i = 0; i < count * area; ++i)
                    dst[i] += src[i];
            }
        });
    }
    return result;
}

template <typename T>
Variable<T> sum(GradTape<T>& tape, const Variable<T>& input)
{
    double acc = 0;
    for (T v : input.value().values())
        acc += v;
    const bool grad = tracks(tape, {&input});
    Variable<T> result(Tensor<T>(Shape{1}, static_cast<T>(acc)), grad);
    if (grad) {
        tape.record("sum", [input, result]() mutable {
            const T g = result.grad_buffer()[0];
            for (T& d : input.grad_buffer().values())
                d += g;
        });
    }
    return result;
}

template <typename T>
Variable<T> weighted_sum(GradTape<T>& tape, std::span<const Variable<T>> terms, std::span<const double> weights)
{
    if (terms.size() != weights.size() || terms.empty())
        throw UsageError("weighted_sum: terms and weights must be non-empty and the same length");
    double acc = 0;
    bool grad = false;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].numel() != 1)
            throw DimensionError("weighted_sum: terms must be scalars");
        acc += weights[i] * static_cast<double>(terms[i].value()[0]);
        grad = grad || terms[i].requires_grad();
    }
    grad = grad && tape.recording();
    Variable<T> result(Tensor<T>(Shape{1}, static_cast<T>(acc)), grad);
    if (grad) {
        std::vector<Variable<T>> parts(terms.begin(), terms.end());
        std::vector<double> w(weights.begin(), weights.end());
        tape.record("weighted_sum", [parts = std::move(parts), w = std::move(w), result]() mutable {
            const T g = result.grad_buffer()[0];
            for (std::size_t i = 0; i < parts.size(); ++i)
                if (parts[i].requires_grad())
                    parts[i].grad_buffer()[0] += static_cast<T>(w[i]) * g;
        });
    }
    return result;
}

#define VSEG_INSTANTIATE_OPS(T)                                                                                  \
    template Variable<T> conv2d(GradTape<T>&, const Variable<T>&, const Variable<T>&, const Variable<T>&, int, int); \
    template Variable<T> batch_norm(GradTape<T>&, const Variable<T>&, const Variable<T>&, const Variable<T>&,      \
                                    BatchNormState<T>&, NormMode);                                                 \
    template Variable<T> relu(GradTape<T>&, const Variable<T>&);                                                  \
    template Variable<T> sigmoid(GradTape<T>&, const Variable<T>&);                                               \
    template Variable<T> max_pool2d(GradTape<T>&, const Variable<T>&, int, int);                                  \
    template Variable<T> upsample_bilinear(GradTape<T>&, const Variable<T>&, int);                                \
    template Variable<T> concat_channels(GradTape<T>&, std::span<const Variable<T>>);                             \
    template Variable<T> slice_channels(GradTape<T>&, const Variable<T>&, int, int);                              \
    template Variable<T> sum(GradTape<T>&, const Variable<T>&);                                                   \
    template Variable<T> weighted_sum(GradTape<T>&, std::span<const Variable<T>>, std::span<const double>);

VSEG_INSTANTIATE_OPS(float)
VSEG_INSTANTIATE_OPS(double)

} // namespace vseg
