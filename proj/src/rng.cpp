#include "vseg/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "vseg/errors.hpp"

namespace vseg {

std::uint64_t Rng::below(std::uint64_t n)
{
    if (n == 0)
        throw UsageError("Rng::below(0)");
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t x = engine_();
    while (x >= limit)
        x = engine_();
    return x % n;
}

double Rng::normal()
{
    double u1 = uniform();
    while (u1 <= 0.0)
        u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const
{
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::restore(const std::string& state)
{
    std::istringstream is(state);
    std::mt19937_64 engine;
    is >> engine;
    if (is.fail())
        throw FormatError("invalid rng state");
    engine_ = engine;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_string(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace vseg
