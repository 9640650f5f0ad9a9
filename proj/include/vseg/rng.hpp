#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace vseg {

// Seeded generator with portable draws. std::*_distribution output differs
// between standard libraries, so every draw here is derived from raw
// mt19937_64 bits.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::uint64_t below(std::uint64_t n);

    // Standard normal via Box-Muller; the spare value is discarded so the
    // stream position depends only on the number of calls.
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    std::string state() const;
    void restore(const std::string& state);

private:
    std::mt19937_64 engine_;
};

// Stateless mixing used to derive independent streams
// (seed = run_seed ^ sample_index, per-parameter init seeds, ...).
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_string(std::string_view s);

} // namespace vseg
