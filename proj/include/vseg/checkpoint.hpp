#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vseg/arch.hpp"
#include "vseg/optimizer.hpp"
#include "vseg/rng.hpp"

namespace vseg {

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

// On disk: "VNCK", u32 version, u32 tensor count, then per tensor u16 name
// length, name bytes, u8 rank, u32 dims, little-endian float32 payload.
// Architecture, seed, epoch and rng state travel as reserved "__*__" tensors.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    ArchConfig arch;
    std::uint64_t seed = 0;
    int epoch = 0;
    std::string rng_state;          // empty when not recorded
    std::vector<NamedTensor> tensors; // parameters, "<bn>.running_mean|var", "opt/<param>"

    const Tensor<float>* find(const std::string& name) const;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is); // FormatError
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const Network<float>& network, int epoch = 0, const RmsProp* optimizer = nullptr,
                           const Rng* rng = nullptr);

enum class LoadMode { strict, by_name };

struct LoadReport {
    std::size_t matched = 0; // parameters copied
    std::size_t total = 0;   // parameters in the network
    double fraction() const { return total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0; }
};

// strict: every parameter and running statistic must match by name and
// shape, else LoadError listing the offenders and nothing is modified.
// by_name: copies the matching subset.
LoadReport load_pretrained(const Checkpoint& ckpt, Network<float>& network, LoadMode mode);

// Builds the checkpoint's architecture and strict-loads it.
Network<float> network_from_checkpoint(const Checkpoint& ckpt);

// Restores optimizer accumulators saved under "opt/".
void restore_optimizer(const Checkpoint& ckpt, RmsProp& optimizer);

} // namespace vseg
