#include <doctest.h>

#include "support.hpp"
#include "vseg/errors.hpp"
#include "vseg/postproc.hpp"

using namespace vseg;
using namespace vseg::testing;

namespace {

ProbabilityMap map_of(std::vector<float> v)
{
    ProbabilityMap m(1, static_cast<int>(v.size()));
    m.values = std::move(v);
    return m;
}

} // namespace

TEST_CASE("histogram bins close the last bin")
{
    CHECK(Histogram256::bin_of(0.0f) == 0);
    CHECK(Histogram256::bin_of(1.0f / 256) == 1);
    CHECK(Histogram256::bin_of(0.999f) == 255);
    CHECK(Histogram256::bin_of(1.0f) == 255);
    ProbabilityMap m(4, 4, 0.3f);
    CHECK(histogram256(m).total() == 16);
}

TEST_CASE("otsu separates a 60/40 two-level map")
{
    ProbabilityMap m(10, 10, 0.1f);
    for (int i = 0; i < 40; ++i)
        m.values[static_cast<std::size_t>(i)] = 0.9f;
    const auto r = otsu_threshold(m);
    CHECK_FALSE(r.degenerate);
    CHECK(r.threshold > 0.1);
    CHECK(r.threshold < 0.9);
    CHECK(r.bin == oracle::otsu_bin(m));
    const auto b = binarize(m, r.threshold);
    for (int i = 0; i < 100; ++i)
        CHECK(b.bits.values[static_cast<std::size_t>(i)] == (i < 40 ? 1 : 0));
}

TEST_CASE("otsu on equal spikes at 0 and 1 keeps both classes")
{
    ProbabilityMap m(1, 10, 0.0f);
    for (int i = 5; i < 10; ++i)
        m.values[static_cast<std::size_t>(i)] = 1.0f;
    const auto r = otsu_threshold(m);
    CHECK(r.threshold > 0.0);
    CHECK(r.threshold < 1.0);
    CHECK(r.bin == 0); // every split between the spikes ties; the lowest wins
    CHECK(binarize(m, r.threshold).count() == 5);
}

TEST_CASE("otsu degenerate and empty maps")
{
    const auto r = otsu_threshold(ProbabilityMap(3, 3, 0.42f));
    CHECK(r.degenerate);
    CHECK(r.threshold == 0.5);
    CHECK_THROWS_AS(otsu_threshold(ProbabilityMap()), UsageError);
}

TEST_CASE("otsu agrees with the exhaustive search on random maps")
{
    Rng rng(4);
    for (int t = 0; t < 30; ++t) {
        ProbabilityMap m(12, 12);
        for (auto& v : m.values)
            v = static_cast<float>(rng.uniform());
        CHECK(otsu_threshold(m).bin == oracle::otsu_bin(m));
    }
}

TEST_CASE("binarize uses the >= rule and is monotone")
{
    const auto m = map_of({0.2f, 0.5f, 0.8f});
    const auto b = binarize(m, 0.5);
    CHECK(b.bits.values == std::vector<std::uint8_t>{0, 1, 1});
    CHECK(binarize(m, 0.0).count() == 3);
    CHECK(binarize(m, 0.8000001).count() == 0);

    Rng rng(5);
    ProbabilityMap r(8, 8);
    for (auto& v : r.values)
        v = static_cast<float>(rng.uniform());
    std::size_t prev = r.size();
    for (double t = 0; t <= 1.0; t += 0.05) {
        const auto n = binarize(r, t).count();
        CHECK(n <= prev);
        prev = n;
    }

    ProbabilityMap binary(1, 4);
    binary.values = {0.f, 1.f, 1.f, 0.f};
    const auto once = binarize(binary, 0.5);
    ProbabilityMap again(1, 4);
    for (std::size_t i = 0; i < 4; ++i)
        again.values[i] = once.bits.values[i];
    CHECK(binarize(again, 0.5) == once);
}
