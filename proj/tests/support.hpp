#pragma once

// Independent reference implementations used by the unit and acceptance
// suites. None of these call into the library code they are checking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "vseg/image.hpp"
#include "vseg/rng.hpp"
#include "vseg/tensor.hpp"

namespace vseg::testing {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor<T> t(shape);
    for (auto& v : t.values())
        v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

inline BinaryMask random_mask(int h, int w, double density, Rng& rng, Spacing spacing = {1.0, 1.0})
{
    BinaryMask m(h, w, spacing);
    for (auto& b : m.bits.values)
        b = rng.bernoulli(density) ? 1 : 0;
    return m;
}

namespace oracle {

inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias, int stride,
                             int pad)
{
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    const int OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
    Tensor<double> y(Shape{B, O, OH, OW});
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < O; ++o)
            for (int i = 0; i < OH; ++i)
                for (int j = 0; j < OW; ++j) {
                    double acc = bias ? (*bias)[static_cast<std::size_t>(o)] : 0.0;
                    for (int c = 0; c < C; ++c)
                        for (int u = 0; u < KH; ++u)
                            for (int v = 0; v < KW; ++v) {
                                const int r = i * stride + u - pad, q = j * stride + v - pad;
                                if (r >= 0 && r < H && q >= 0 && q < W)
                                    acc += x.at(b, c, r, q) * w.at(o, c, u, v);
                            }
                    y.at(b, o, i, j) = acc;
                }
    return y;
}

inline Tensor<double> max_pool(const Tensor<double>& x, int window, int stride)
{
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OH = (H - window) / stride + 1, OW = (W - window) / stride + 1;
    Tensor<double> y(Shape{B, C, OH, OW});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < OH; ++i)
                for (int j = 0; j < OW; ++j) {
                    double m = -std::numeric_limits<double>::infinity();
                    for (int u = 0; u < window; ++u)
                        for (int v = 0; v < window; ++v)
                            m = std::max(m, x.at(b, c, i * stride + u, j * stride + v));
                    y.at(b, c, i, j) = m;
                }
    return y;
}

// Half-pixel-centre bilinear sample at output site (i, j).
inline double bilinear_at(const Tensor<double>& x, int b, int c, int i, int j, int f)
{
    const int H = x.dim(2), W = x.dim(3);
    const double sy = std::clamp((i + 0.5) / f - 0.5, 0.0, H - 1.0);
    const double sx = std::clamp((j + 0.5) / f - 0.5, 0.0, W - 1.0);
    const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
    const int y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
    const double ty = sy - y0, tx = sx - x0;
    return (1 - ty) * ((1 - tx) * x.at(b, c, y0, x0) + tx * x.at(b, c, y0, x1)) +
           ty * ((1 - tx) * x.at(b, c, y1, x0) + tx * x.at(b, c, y1, x1));
}

inline Tensor<double> batch_norm_train(const Tensor<double>& x, const Tensor<double>& gamma,
                                       const Tensor<double>& beta, double eps)
{
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<double> y(x.shape());
    const double n = static_cast<double>(B) * H * W;
    for (int c = 0; c < C; ++c) {
        double mean = 0, var = 0;
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j)
                    mean += x.at(b, c, i, j);
        mean /= n;
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j)
                    var += (x.at(b, c, i, j) - mean) * (x.at(b, c, i, j) - mean);
        var /= n;
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j)
                    y.at(b, c, i, j) = gamma[static_cast<std::size_t>(c)] * (x.at(b, c, i, j) - mean) /
                                           std::sqrt(var + eps) +
                                       beta[static_cast<std::size_t>(c)];
    }
    return y;
}

struct Counts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Counts count(const BinaryMask& pred, const BinaryMask& gt)
{
    Counts c;
    for (int r = 0; r < gt.height(); ++r)
        for (int q = 0; q < gt.width(); ++q) {
            const bool p = pred.bits.at(r, q) != 0, g = gt.bits.at(r, q) != 0;
            if (p && g)
                ++c.tp;
            else if (p)
                ++c.fp;
            else if (g)
                ++c.fn;
            else
                ++c.tn;
        }
    return c;
}

using Points = std::vector<std::pair<int, int>>;

inline Points foreground(const BinaryMask& m)
{
    Points out;
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c)
            if (m.bits.at(r, c))
                out.emplace_back(r, c);
    return out;
}

inline Points surface(const BinaryMask& m)
{
    auto fg = [&](int r, int c) { return r >= 0 && c >= 0 && r < m.height() && c < m.width() && m.bits.at(r, c); };
    Points out;
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c)
            if (fg(r, c) && (!fg(r - 1, c) || !fg(r + 1, c) || !fg(r, c - 1) || !fg(r, c + 1)))
                out.emplace_back(r, c);
    return out;
}

inline double distance(std::pair<int, int> a, std::pair<int, int> b, Spacing s)
{
    const double dr = (a.first - b.first) * s.row_mm, dc = (a.second - b.second) * s.col_mm;
    return std::sqrt(dr * dr + dc * dc);
}

inline double directed_hausdorff(const Points& from, const Points& to, Spacing s)
{
    double worst = 0;
    for (const auto& a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : to)
            best = std::min(best, distance(a, b, s));
        worst = std::max(worst, best);
    }
    return worst;
}

inline double hausdorff(const BinaryMask& a, const BinaryMask& b)
{
    const auto pa = foreground(a), pb = foreground(b);
    return std::max(directed_hausdorff(pa, pb, a.spacing), directed_hausdorff(pb, pa, a.spacing));
}

inline double asd(const BinaryMask& a, const BinaryMask& b)
{
    const auto pa = surface(a), pb = surface(b);
    double total = 0;
    for (const auto& p : pa) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : pb)
            best = std::min(best, distance(p, q, a.spacing));
        total += best;
    }
    for (const auto& q : pb) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : pa)
            best = std::min(best, distance(q, p, a.spacing));
        total += best;
    }
    return total / static_cast<double>(pa.size() + pb.size());
}

// Exhaustive Otsu: every split k in 0..254 is scored from scratch with exact
// rational arithmetic, keeping the first maximum. Returns -1 if degenerate.
inline int otsu_bin(const ProbabilityMap& map)
{
    std::vector<std::uint64_t> hist(256, 0);
    for (float v : map.values) {
        int k = static_cast<int>(v * 256.0);
        if (k > 255)
            k = 255;
        ++hist[static_cast<std::size_t>(k)];
    }
    int occupied = 0;
    for (auto h : hist)
        occupied += h > 0;
    if (occupied <= 1)
        return -1;

    using u128 = unsigned __int128;
    int best = -1;
    u128 best_num = 0, best_den = 1;
    for (int k = 0; k < 255; ++k) {
        std::uint64_t n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (int i = 0; i < 256; ++i) {
            const auto h = hist[static_cast<std::size_t>(i)];
            if (i <= k) {
                n0 += h;
                s0 += h * static_cast<std::uint64_t>(i);
            } else {
                n1 += h;
                s1 += h * static_cast<std::uint64_t>(i);
            }
        }
        if (n0 == 0 || n1 == 0)
            continue;
        // w0*w1*(mu0-mu1)^2 * N^2 = (s0*n1 - s1*n0)^2 / (n0*n1)
        const u128 a = static_cast<u128>(s0) * n1, b = static_cast<u128>(s1) * n0;
        const u128 d = a > b ? a - b : b - a;
        const u128 num = d * d, den = static_cast<u128>(n0) * n1;
        if (best < 0 || num * best_den > best_num * den) {
            best = k;
            best_num = num;
            best_den = den;
        }
    }
    return best;
}

} // namespace oracle

struct GradCheckResult {
    // Per tensor: max|a - n| / max(|a|, |n|) over its checked entries; the
    // largest value over all tensors.
    double max_rel_error = 0;
    // Strictest form, each entry against its own magnitude (floored).
    double max_elementwise_rel = 0;
    std::size_t checked = 0;
    std::size_t skipped = 0; // perturbation crossed a relu/max-pool kink
};

// Central differences on every element of `leaves`. The loss is rebuilt by
// `loss_fn` on a fresh tape each time; entries whose +h or -h evaluation
// changes the branch signature are skipped.
//
// Central differences carry an h^2 f'''/6 truncation term. Through batch
// normalization f''' does not shrink with f', so an entry whose gradient is
// a thousand times smaller than its neighbours can show a large ratio even
// though the absolute agreement is ~1e-9. The tensor-level ratio measures the
// error against the scale of the gradient it belongs to. h = 1e-4 keeps that
// term near 1e-6 of the gradient scale while roundoff (~1e-12 / h) stays
// negligible; 1e-3 was measurably too coarse for the small-batch norm layers.
inline GradCheckResult grad_check(const std::vector<Variable<double>>& leaves,
                                  const std::function<Variable<double>(GradTape<double>&)>& loss_fn, double h = 1e-4,
                                  double floor = 1e-6)
{
    std::vector<Tensor<double>> analytic;
    {
        GradTape<double> tape;
        const auto loss = loss_fn(tape);
        tape.backward(loss);
        for (const auto& v : leaves)
            analytic.push_back(v.grad());
    }
    auto eval = [&](std::uint64_t& sig) {
        GradTape<double> tape(false);
        tape.track_branches(true);
        const double value = loss_fn(tape).value()[0];
        sig = tape.branch_signature();
        return value;
    };
    std::uint64_t base_sig = 0;
    eval(base_sig);

    GradCheckResult res;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        Variable<double> leaf = leaves[l];
        double max_diff = 0, max_mag = 0;
        for (std::size_t i = 0; i < leaf.numel(); ++i) {
            const double orig = leaf.value()[i];
            std::uint64_t sp = 0, sm = 0;
            leaf.mutable_value()[i] = orig + h;
            const double fp = eval(sp);
            leaf.mutable_value()[i] = orig - h;
            const double fm = eval(sm);
            leaf.mutable_value()[i] = orig;
            if (sp != base_sig || sm != base_sig) {
                ++res.skipped;
                continue;
            }
            const double numeric = (fp - fm) / (2 * h);
            const double a = analytic[l][i];
            const double diff = std::abs(a - numeric);
            res.max_elementwise_rel =
                std::max(res.max_elementwise_rel, diff / std::max({std::abs(a), std::abs(numeric), floor}));
            max_diff = std::max(max_diff, diff);
            max_mag = std::max({max_mag, std::abs(a), std::abs(numeric)});
            ++res.checked;
        }
        res.max_rel_error = std::max(res.max_rel_error, max_diff / std::max(max_mag, floor));
    }
    return res;
}

} // namespace vseg::testing
