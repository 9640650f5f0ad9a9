#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "golden.hpp"
#include "support.hpp"
#include "vseg/checkpoint.hpp"
#include "vseg/errors.hpp"

using namespace vseg;
using namespace vseg::testing;

namespace {

ArchConfig arch(ArchKind kind, int n, int size = 64, bool ds = false)
{
    ArchConfig cfg;
    cfg.kind = kind;
    cfg.num_scales = n;
    cfg.base_channels = 4;
    cfg.input_size = size;
    cfg.deep_supervision = ds;
    return cfg;
}

ForwardOutput<float> run(Network<float>& net, const Tensor<float>& x, NormMode mode = NormMode::eval)
{
    GradTape<float> tape(false);
    return net.forward(tape, Variable<float>(x), mode);
}

std::vector<const PlanStep*> steps_with(const Network<float>& net, StepRole role)
{
    std::vector<const PlanStep*> out;
    for (const auto& s : net.plan())
        if (s.role == role)
            out.push_back(&s);
    return out;
}

const PlanStep* labelled(const Network<float>& net, const std::string& label)
{
    for (const auto& s : net.plan())
        if (s.label == label)
            return &s;
    return nullptr;
}

bool strictly_unit(const Tensor<float>& t)
{
    for (float v : t.values())
        if (!(v > 0.0f && v < 1.0f))
            return false;
    return true;
}

} // namespace

TEST_CASE("encoder halves spatial size and doubles channels per stage")
{
    ArchConfig cfg = arch(ArchKind::unet, 4);
    cfg.base_channels = 8;
    Network<float> net(cfg, 1);
    const auto stages = build_encoder(net);
    REQUIRE(stages.size() == 4);
    const int sizes[] = {64, 32, 16, 8}, channels[] = {8, 16, 32, 64};
    for (int i = 0; i < 4; ++i) {
        CHECK(stages[i].size == sizes[i]);
        CHECK(stages[i].channels == channels[i]);
        CHECK(net.step(stages[i].output_step).size == sizes[i]);
    }

    Network<float> deep(arch(ArchKind::unet, 5), 1);
    CHECK(build_encoder(deep).back().size == 4);
}

TEST_CASE("one encoder stage holds exactly two conv-bn blocks worth of parameters")
{
    // Stage 1 with 1 input channel and C outputs: 9*C + 9*C*C weights and 4*C bn affine values.
    ArchConfig cfg = arch(ArchKind::unet, 2, 8);
    cfg.base_channels = 5;
    Network<float> net(cfg, 1);
    build_encoder(net);
    std::size_t stage1 = 0;
    for (const auto& p : net.params())
        if (p.name.starts_with("enc1."))
            stage1 += p.value.numel();
    const std::size_t c = 5;
    CHECK(stage1 == 9 * c + 9 * c * c + 4 * c);
}

TEST_CASE("invalid configurations fail at build time")
{
    CHECK_THROWS_AS(build_network<float>(arch(ArchKind::unet3p, 5, 8), 1), BuildError);
    CHECK_THROWS_AS(build_network<float>(arch(ArchKind::unet3p, 4, 48), 1), BuildError);
    ArchConfig zero = arch(ArchKind::unet, 3);
    zero.base_channels = 0;
    CHECK_THROWS_AS(build_network<float>(zero, 1), BuildError);
    Network<float> unet = build_network<float>(arch(ArchKind::unet, 3), 1);
    CHECK_THROWS_AS(attach_deep_supervision(unet), UsageError);
}

TEST_CASE("U-Net has N-1 decoder fusions fed by skip plus upsampled channels")
{
    Network<float> net = build_network<float>(arch(ArchKind::unet, 4), 3);
    const auto cats = steps_with(net, StepRole::decoder_concat);
    CHECK(cats.size() == 3);
    for (const PlanStep* cat : cats) {
        REQUIRE(cat->inputs.size() == 2);
        const int skip = net.step(cat->inputs[0]).channels, up = net.step(cat->inputs[1]).channels;
        CHECK(cat->channels == skip + up);
        CHECK(net.step(cat->inputs[1]).kind == StepKind::upsample);
    }
    Rng rng(1);
    const auto x = random_tensor<float>({1, 1, 64, 64}, rng, 0, 1);
    const auto out = run(net, x);
    CHECK(out.final.shape() == Shape{1, 1, 64, 64});
    CHECK(strictly_unit(out.final.value()));
    CHECK(out.side_outputs.empty());
}

TEST_CASE("U-Net++ grid rows hold 3, 2 and 1 nodes at N=4")
{
    Network<float> net = build_network<float>(arch(ArchKind::unetpp, 4), 3);
    std::map<int, int> per_row;
    for (const PlanStep* s : steps_with(net, StepRole::decoder_concat))
        ++per_row[s->label[4] - '0']; // "[X^{i,j}]"
    CHECK(per_row[0] == 3);
    CHECK(per_row[1] == 2);
    CHECK(per_row[2] == 1);
    CHECK(per_row.size() == 3);

    // X^{0,2} = F([X^{0,0}, X^{0,1}, U(X^{1,1})])
    const PlanStep* cat = labelled(net, "[X^{0,2}]");
    REQUIRE(cat);
    REQUIRE(cat->inputs.size() == 3);
    CHECK(net.step(cat->inputs[0]).label == "X_En^1");
    CHECK(net.step(cat->inputs[1]).label == "X^{0,1}");
    CHECK(net.step(cat->inputs[2]).label == "up2(X^{1,1})");

    Rng rng(2);
    const auto out = run(net, random_tensor<float>({1, 1, 64, 64}, rng, 0, 1));
    CHECK(out.final.shape() == Shape{1, 1, 64, 64});
}

TEST_CASE("U-Net and U-Net++ coincide at N=2")
{
    Network<float> a = build_network<float>(arch(ArchKind::unet, 2, 16), 9);
    Network<float> b = build_network<float>(arch(ArchKind::unetpp, 2, 16), 9);
    REQUIRE(a.plan().size() == b.plan().size());
    for (std::size_t i = 0; i < a.plan().size(); ++i) {
        CHECK(a.plan()[i].kind == b.plan()[i].kind);
        CHECK(a.plan()[i].inputs == b.plan()[i].inputs);
        CHECK(a.plan()[i].channels == b.plan()[i].channels);
    }
    REQUIRE(a.params().size() == b.params().size());
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        CHECK(a.params()[i].name == b.params()[i].name);
        CHECK(a.params()[i].value.value() == b.params()[i].value.value());
    }
}

TEST_CASE("U-Net 3+ decoder at scale 3 of N=5 gathers all five scales")
{
    Network<float> net = build_network<float>(arch(ArchKind::unet3p, 5), 4);
    const PlanStep* cat = labelled(net, "[X_De^3]");
    REQUIRE(cat);
    REQUIRE(cat->inputs.size() == 5);
    const char* expected[] = {"pool4(X_En^1)", "pool2(X_En^2)", "X_En^3", "up2(X_De^4)", "up4(X_En^5)"};
    for (int b = 0; b < 5; ++b) {
        const PlanStep& branch = net.step(cat->inputs[b]);
        CHECK(branch.kind == StepKind::conv_bn_relu);
        CHECK(branch.channels == 4);
        CHECK(net.step(branch.inputs[0]).label == expected[b]);
    }
    CHECK(labelled(net, "X_De^3")->channels == 5 * 4);
}

TEST_CASE("U-Net 3+ fan-in is N branches of c channels at every decoder scale")
{
    for (int n : {3, 4, 5}) {
        ArchConfig cfg = arch(ArchKind::unet3p, n);
        cfg.per_path_channels = 3;
        Network<float> net = build_network<float>(cfg, 5);
        const auto cats = steps_with(net, StepRole::decoder_concat);
        CHECK(cats.size() == static_cast<std::size_t>(n - 1));
        for (const PlanStep* cat : cats) {
            CHECK(cat->inputs.size() == static_cast<std::size_t>(n));
            for (int in : cat->inputs)
                CHECK(net.step(in).channels == 3);
        }
        for (const PlanStep* d : steps_with(net, StepRole::decoder))
            CHECK(d->channels == n * 3);
    }
}

TEST_CASE("deep supervision heads follow the 16, 8, 4, 2 schedule at N=5")
{
    Network<float> net = build_network<float>(arch(ArchKind::unet3p, 5, 64, true), 6);
    REQUIRE(net.side_steps().size() == 4);
    const int pre[] = {32, 16, 8, 4}, factor[] = {2, 4, 8, 16};
    for (int k = 0; k < 4; ++k) {
        const PlanStep& sig = net.step(net.side_steps()[k]);
        const PlanStep& up = net.step(sig.inputs[0]);
        REQUIRE(up.kind == StepKind::upsample);
        CHECK(net.step(up.inputs[0]).size == pre[k]);
        CHECK(up.factor == factor[k]);
        CHECK(up.size == 64);
    }
    Rng rng(3);
    const auto out = run(net, random_tensor<float>({2, 1, 64, 64}, rng, 0, 1));
    CHECK(out.side_outputs.size() == 4);
    for (const auto& s : out.side_outputs) {
        CHECK(s.shape() == Shape{2, 1, 64, 64});
        CHECK(strictly_unit(s.value()));
    }
    Network<float> plain = build_network<float>(arch(ArchKind::unet3p, 5), 6);
    CHECK(run(plain, random_tensor<float>({1, 1, 64, 64}, rng, 0, 1)).side_outputs.empty());
}

TEST_CASE("forward rejects the wrong spatial size and stays finite on zeros")
{
    Network<float> net = build_network<float>(arch(ArchKind::unet3p, 4, 32, true), 7);
    CHECK_THROWS_AS(run(net, Tensor<float>(Shape{1, 1, 16, 16})), DimensionError);
    const auto out = run(net, Tensor<float>(Shape{1, 1, 32, 32}));
    CHECK(out.final.value().all_finite());
    for (const auto& s : out.side_outputs)
        CHECK(s.value().all_finite());
}

TEST_CASE("eval-mode batches are independent and repeatable")
{
    for (ArchKind kind : {ArchKind::unet, ArchKind::unetpp, ArchKind::unet3p}) {
        Network<float> net = build_network<float>(arch(kind, 3, 16), 8);
        Rng rng(4);
        const auto a = random_tensor<float>({1, 1, 16, 16}, rng, 0, 1), b = random_tensor<float>({1, 1, 16, 16}, rng, 0, 1);
        std::vector<float> both(a.values().begin(), a.values().end());
        both.insert(both.end(), b.values().begin(), b.values().end());
        const auto pair = run(net, Tensor<float>(Shape{2, 1, 16, 16}, both)).final.value();
        const auto ya = run(net, a).final.value(), yb = run(net, b).final.value();
        double worst = 0;
        for (std::size_t i = 0; i < 256; ++i) {
            worst = std::max(worst, static_cast<double>(std::abs(pair[i] - ya[i])));
            worst = std::max(worst, static_cast<double>(std::abs(pair[256 + i] - yb[i])));
        }
        CHECK(worst < 1e-5);
        CHECK(run(net, a).final.value() == ya);
    }
}

TEST_CASE("parameter names are unique and initialization is seeded")
{
    Network<float> a = build_network<float>(arch(ArchKind::unet3p, 4, 32, true), 10);
    Network<float> b = build_network<float>(arch(ArchKind::unet3p, 4, 32, true), 10);
    Network<float> c = build_network<float>(arch(ArchKind::unet3p, 4, 32, true), 11);
    std::set<std::string> names;
    for (const auto& p : a.params())
        CHECK(names.insert(p.name).second);
    CHECK(a.params().front().value.value() == b.params().front().value.value());
    CHECK_FALSE(a.params().front().value.value() == c.params().front().value.value());
}

TEST_CASE("U-Net 3+ N=4 forward matches the frozen golden output")
{
    const Checkpoint golden = load_checkpoint(std::string(VSEG_TEST_DATA) + "/unet3p_n4_64.golden");
    const Tensor<float>* expect = golden.find("final");
    REQUIRE(expect);
    const Tensor<float> got = golden_forward();
    REQUIRE(got.shape() == expect->shape());
    double worst = 0;
    for (std::size_t i = 0; i < got.numel(); ++i)
        worst = std::max(worst, static_cast<double>(std::abs(got[i] - (*expect)[i])));
    CHECK(worst < 1e-5);
}
