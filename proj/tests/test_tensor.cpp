#include <doctest.h>

#include <cmath>

#include "gradient_suite.hpp"
#include "vseg/errors.hpp"

using namespace vseg;
using namespace vseg::testing;

namespace {

Variable<double> constant(Shape shape, std::vector<double> values, bool grad = false)
{
    return Variable<double>(Tensor<double>(std::move(shape), std::move(values)), grad);
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b)
{
    REQUIRE(a.shape() == b.shape());
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("tensor rejects non-positive extents and mismatched data")
{
    CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), DimensionError);
    Tensor<float> t(Shape{2, 3}, 1.5f);
    CHECK(t.numel() == 6);
    CHECK(t.all_finite());
    t[4] = std::nanf("");
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("conv2d with a scalar kernel doubles its input")
{
    GradTape<double> tape(false);
    auto x = constant({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto w = constant({1, 1, 1, 1}, {2});
    auto y = conv2d(tape, x, w, Variable<double>(), 1, 0);
    CHECK(y.value().values().size() == 9);
    for (std::size_t i = 0; i < 9; ++i)
        CHECK(y.value()[i] == 2.0 * (i + 1));
}

TEST_CASE("conv2d of ones with a ones kernel sums the window")
{
    GradTape<double> tape(false);
    auto y = conv2d(tape, Variable<double>(Tensor<double>(Shape{1, 1, 3, 3}, 1.0)),
                    Variable<double>(Tensor<double>(Shape{1, 1, 3, 3}, 1.0)), Variable<double>(), 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.value()[0] == 9.0);
}

TEST_CASE("conv2d matches the direct-loop oracle")
{
    Rng rng(11);
    for (int stride : {1, 2}) {
        const auto x = random_tensor<double>({1, 2, 5, 5}, rng);
        const auto w = random_tensor<double>({4, 2, 3, 3}, rng);
        const auto b = random_tensor<double>({4}, rng);
        GradTape<double> tape(false);
        auto y = conv2d(tape, Variable<double>(x), Variable<double>(w), Variable<double>(b), stride, 1);
        CHECK(max_abs_diff(y.value(), oracle::conv2d(x, w, &b, stride, 1)) < 1e-5);
    }
}

TEST_CASE("conv2d is linear in its input")
{
    Rng rng(12);
    const auto x = random_tensor<double>({2, 3, 6, 6}, rng), z = random_tensor<double>({2, 3, 6, 6}, rng);
    const auto w = random_tensor<double>({2, 3, 3, 3}, rng);
    const double a = 0.7, b = -1.3;
    Tensor<double> mix(x.shape());
    for (std::size_t i = 0; i < mix.numel(); ++i)
        mix[i] = a * x[i] + b * z[i];
    GradTape<double> tape(false);
    const Variable<double> wv(w), none;
    const auto yx = conv2d(tape, Variable<double>(x), wv, none, 1, 1).value();
    const auto yz = conv2d(tape, Variable<double>(z), wv, none, 1, 1).value();
    const auto ym = conv2d(tape, Variable<double>(mix), wv, none, 1, 1).value();
    Tensor<double> expect(ym.shape());
    for (std::size_t i = 0; i < expect.numel(); ++i)
        expect[i] = a * yx[i] + b * yz[i];
    CHECK(max_abs_diff(ym, expect) < 1e-4);
}

TEST_CASE("conv2d rejects a channel mismatch and even kernels")
{
    GradTape<double> tape(false);
    const Variable<double> x(Tensor<double>(Shape{1, 2, 4, 4}));
    CHECK_THROWS_AS(conv2d(tape, x, Variable<double>(Tensor<double>(Shape{1, 3, 3, 3})), Variable<double>(), 1, 1),
                    DimensionError);
    CHECK_THROWS_AS(conv2d(tape, x, Variable<double>(Tensor<double>(Shape{1, 2, 2, 2})), Variable<double>(), 1, 1),
                    DimensionError);
}

TEST_CASE("batch_norm standardizes per channel in train mode")
{
    Rng rng(13);
    const auto x = random_tensor<double>({3, 2, 4, 4}, rng, -2, 5);
    GradTape<double> tape(false);
    BatchNormState<double> st(2);
    auto run = [&](double g, double b) {
        return batch_norm(tape, Variable<double>(x), Variable<double>(Tensor<double>(Shape{2}, g)),
                          Variable<double>(Tensor<double>(Shape{2}, b)), st, NormMode::train)
            .value();
    };
    for (auto [g, b, tol] : {std::tuple{1.0, 0.0, 1e-5}, std::tuple{2.0, 3.0, 1e-4}}) {
        const auto y = run(g, b);
        for (int c = 0; c < 2; ++c) {
            double mean = 0, sq = 0;
            const double n = 3 * 16;
            for (int k = 0; k < 3; ++k)
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 4; ++j)
                        mean += y.at(k, c, i, j);
            mean /= n;
            for (int k = 0; k < 3; ++k)
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 4; ++j)
                        sq += (y.at(k, c, i, j) - mean) * (y.at(k, c, i, j) - mean);
            CHECK(std::abs(mean - b) < tol);
            CHECK(std::abs(std::sqrt(sq / n) - g) < tol);
        }
        CHECK(max_abs_diff(y, oracle::batch_norm_train(x, Tensor<double>(Shape{2}, g), Tensor<double>(Shape{2}, b),
                                                       1e-5)) < 1e-9);
    }
}

TEST_CASE("batch_norm eval mode with batch statistics reproduces train mode")
{
    Rng rng(14);
    const auto x = random_tensor<double>({2, 3, 4, 4}, rng, -1, 3);
    const auto gamma = random_tensor<double>({3}, rng, 0.5, 1.5), beta = random_tensor<double>({3}, rng);
    GradTape<double> tape(false);
    BatchNormState<double> st(3);
    const auto train_y =
        batch_norm(tape, Variable<double>(x), Variable<double>(gamma), Variable<double>(beta), st, NormMode::train)
            .value();
    BatchNormState<double> batch_stats(3);
    for (int c = 0; c < 3; ++c) {
        double mean = 0, var = 0;
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j)
                    mean += x.at(b, c, i, j);
        mean /= 32;
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j)
                    var += (x.at(b, c, i, j) - mean) * (x.at(b, c, i, j) - mean);
        batch_stats.running_mean[c] = mean;
        batch_stats.running_var[c] = var / 32;
    }
    const auto eval_y = batch_norm(tape, Variable<double>(x), Variable<double>(gamma), Variable<double>(beta),
                                   batch_stats, NormMode::eval)
                            .value();
    CHECK(max_abs_diff(train_y, eval_y) < 1e-5);
}

TEST_CASE("batch_norm updates running statistics with momentum 0.1")
{
    const auto x = Tensor<double>(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    BatchNormState<double> st(1);
    GradTape<double> tape(false);
    batch_norm(tape, Variable<double>(x), Variable<double>(Tensor<double>(Shape{1}, 1.0)),
               Variable<double>(Tensor<double>(Shape{1}, 0.0)), st, NormMode::train);
    CHECK(st.running_mean[0] == doctest::Approx(0.1 * 2.5));
    CHECK(st.running_var[0] > 0.9); // blended towards the batch variance from 1
    st.epsilon = 0;
    CHECK_THROWS_AS(batch_norm(tape, Variable<double>(x), Variable<double>(Tensor<double>(Shape{1}, 1.0)),
                               Variable<double>(Tensor<double>(Shape{1}, 0.0)), st, NormMode::train),
                    ConfigError);
}

TEST_CASE("relu forward and its gradient convention")
{
    GradTape<double> tape;
    auto x = constant({1, 1, 1, 3}, {-1, 0, 2}, true);
    auto y = relu(tape, x);
    CHECK(y.value().values()[0] == 0.0);
    CHECK(y.value().values()[1] == 0.0);
    CHECK(y.value().values()[2] == 2.0);
    tape.backward(sum(tape, y));
    const auto g = x.grad();
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 1.0);

    GradTape<double> t2(false);
    const auto neg = relu(t2, constant({1, 1, 2, 2}, {-1, -2, -3, -0.5})).value();
    for (double v : neg.values())
        CHECK(v == 0.0);
}

TEST_CASE("sigmoid values, gradient at zero and saturation")
{
    GradTape<double> tape;
    auto w = constant({1, 1, 1, 1}, {0.0}, true);
    auto y = sigmoid(tape, w);
    CHECK(y.value()[0] == 0.5);
    tape.backward(sum(tape, y));
    CHECK(w.grad()[0] == doctest::Approx(0.25));

    GradTape<float> t2(false);
    const auto big = sigmoid(t2, Variable<float>(Tensor<float>(Shape{1, 1, 1, 2}, {100.0f, -100.0f}))).value();
    CHECK(std::abs(big[0] - 1.0f) < 1e-7);
    CHECK(big[1] >= 0.0f);
    CHECK(big.all_finite());
}

TEST_CASE("max_pool2d picks window maxima and routes gradient to the first maximum")
{
    GradTape<double> tape;
    auto x = constant({1, 1, 2, 2}, {1, 2, 3, 4}, true);
    auto y = max_pool2d(tape, x, 2, 2);
    CHECK(y.value()[0] == 4.0);

    auto flat = Variable<double>(Tensor<double>(Shape{1, 1, 4, 4}, 7.0), true);
    auto yf = max_pool2d(tape, flat, 2, 2);
    CHECK(yf.shape() == Shape{1, 1, 2, 2});
    for (double v : yf.value().values())
        CHECK(v == 7.0);
    tape.backward(sum(tape, yf));
    const auto g = flat.grad();
    // Ties resolve to the top-left element of each window.
    CHECK(g.at(0, 0, 0, 0) == 1.0);
    CHECK(g.at(0, 0, 0, 1) == 0.0);
    CHECK(g.at(0, 0, 1, 0) == 0.0);
    CHECK(g.at(0, 0, 2, 2) == 1.0);

    Rng rng(15);
    const auto r = random_tensor<double>({1, 1, 8, 8}, rng);
    GradTape<double> t2(false);
    CHECK(max_pool2d(t2, Variable<double>(r), 4, 4).value() == oracle::max_pool(r, 4, 4));
}

TEST_CASE("upsample_bilinear follows the half-pixel convention")
{
    GradTape<double> tape(false);
    const auto one = upsample_bilinear(tape, constant({1, 1, 1, 1}, {3.5}), 2).value();
    CHECK(one.shape() == Shape{1, 1, 2, 2});
    for (double v : one.values())
        CHECK(v == 3.5);

    Rng rng(16);
    const auto r = random_tensor<double>({2, 3, 4, 4}, rng);
    CHECK(upsample_bilinear(tape, Variable<double>(r), 1).value() == r);

    const auto x = Tensor<double>(Shape{1, 1, 2, 2}, {0, 1, 2, 3});
    const auto y = upsample_bilinear(tape, Variable<double>(x), 2).value();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(y.at(0, 0, i, j) == doctest::Approx(oracle::bilinear_at(x, 0, 0, i, j, 2)).epsilon(1e-12));
    // Corners clamp to the source corners, interior sites interpolate.
    CHECK(y.at(0, 0, 0, 0) == 0.0);
    CHECK(y.at(0, 0, 1, 1) == doctest::Approx(0.75));
}

TEST_CASE("upsample_bilinear preserves constants and the mean of a padded interior region")
{
    GradTape<double> tape(false);
    const auto c = upsample_bilinear(tape, Variable<double>(Tensor<double>(Shape{1, 2, 3, 3}, -0.25)), 4).value();
    for (double v : c.values())
        CHECK(v == -0.25);

    Rng rng(17);
    Tensor<double> x(Shape{1, 1, 6, 6}, 0.4);
    double interior = 0;
    for (int i = 2; i < 4; ++i)
        for (int j = 2; j < 4; ++j)
            interior += (x.at(0, 0, i, j) = rng.uniform());
    const auto y = upsample_bilinear(tape, Variable<double>(x), 2).value();
    double in_mean = 0, out_mean = 0;
    for (double v : x.values())
        in_mean += v;
    for (double v : y.values())
        out_mean += v;
    CHECK(interior > 0);
    CHECK(std::abs(in_mean / 36 - out_mean / 144) < 1e-5);
}

TEST_CASE("concat_channels orders inputs and slicing recovers them")
{
    Rng rng(18);
    auto a = Variable<double>(random_tensor<double>({1, 1, 2, 2}, rng), true);
    auto b = Variable<double>(random_tensor<double>({1, 2, 2, 2}, rng), true);
    GradTape<double> tape;
    const std::vector<Variable<double>> parts{a, b};
    auto y = concat_channels<double>(tape, parts);
    CHECK(y.shape() == Shape{1, 3, 2, 2});
    CHECK(y.value().at(0, 0, 1, 1) == a.value().at(0, 0, 1, 1));
    CHECK(y.value().at(0, 2, 0, 1) == b.value().at(0, 1, 0, 1));
    CHECK(slice_channels(tape, y, 0, 1).value() == a.value());
    CHECK(slice_channels(tape, y, 1, 2).value() == b.value());

    tape.backward(sum(tape, y));
    const auto ga = a.grad(), gb = b.grad();
    for (double g : ga.values())
        CHECK(g == 1.0);
    for (double g : gb.values())
        CHECK(g == 1.0);

    GradTape<double> t2(false);
    const std::vector<Variable<double>> single{a};
    CHECK(concat_channels<double>(t2, single).value() == a.value());
    const std::vector<Variable<double>> bad{a, Variable<double>(Tensor<double>(Shape{1, 1, 3, 3}))};
    CHECK_THROWS_AS(concat_channels<double>(t2, bad), DimensionError);
}

TEST_CASE("backward of a sum yields ones and rejects non-scalar losses")
{
    Rng rng(19);
    auto x = Variable<double>(random_tensor<double>({2, 1, 3, 3}, rng), true);
    GradTape<double> tape;
    tape.backward(sum(tape, x));
    const auto gx = x.grad();
    for (double g : gx.values())
        CHECK(g == 1.0);

    GradTape<double> t2;
    auto y = relu(t2, x);
    CHECK_THROWS_AS(t2.backward(y), UsageError);
}

TEST_CASE("forward passes are bit-identical on repeat")
{
    Rng rng(20);
    const auto x = random_tensor<double>({2, 2, 6, 6}, rng), w = random_tensor<double>({3, 2, 3, 3}, rng);
    auto run = [&] {
        GradTape<double> tape(false);
        auto y = conv2d(tape, Variable<double>(x), Variable<double>(w), Variable<double>(), 1, 1);
        return upsample_bilinear(tape, max_pool2d(tape, relu(tape, y), 2, 2), 2).value();
    };
    CHECK(run() == run());
}

TEST_CASE("every op gradient matches central differences")
{
    for (const auto& name : kGradientCases) {
        if (name == "unet3p_hybrid")
            continue; // covered by the two-layer case here and end to end in the acceptance run
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const auto r = run_gradient_case(name, seed);
            INFO(name << " seed " << seed);
            CHECK(r.checked > 0);
            CHECK(r.max_elementwise_rel < 1e-4);
        }
    }
}

TEST_CASE("a two-layer conv net under the hybrid loss passes the gradient check")
{
    Rng rng(21);
    auto w1 = leaf({3, 1, 3, 3}, rng), b1 = leaf({3}, rng), w2 = leaf({1, 3, 3, 3}, rng), b2 = leaf({1}, rng);
    const auto x = random_tensor<double>({2, 1, 6, 6}, rng, 0, 1);
    const auto y = binary_target({2, 1, 6, 6}, rng);
    LossConfig cfg;
    const auto r = grad_check({w1, b1, w2, b2}, [&](GradTape<double>& t) {
        auto h = relu(t, conv2d(t, Variable<double>(x), w1, b1, 1, 1));
        auto p = sigmoid(t, conv2d(t, h, w2, b2, 1, 1));
        return branch_loss<double>(t, p, y, nullptr, cfg).total;
    });
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error < 1e-4);
}
