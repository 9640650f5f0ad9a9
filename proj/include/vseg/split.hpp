#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vseg {

struct ItemRef {
    std::string id;
    std::string patient_id;
};

struct SplitPlan {
    std::vector<std::string> train, val, test;
    std::uint64_t seed = 0;

    friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

// Patient-level split: patients are shuffled by `seed`, one is placed in each
// partition, and the rest go greedily to the partition with the largest
// remaining image deficit. Throws SplitError with fewer than 3 patients.
SplitPlan split(const std::vector<ItemRef>& items, std::array<double, 3> ratios = {0.7, 0.1, 0.2},
                std::uint64_t seed = 0);

// k patient-disjoint test folds of near-equal image count; the remaining
// patients of each fold are divided 7:1 into train and val.
std::vector<SplitPlan> kfold(const std::vector<ItemRef>& items, int k = 10, std::uint64_t seed = 0);

} // namespace vseg
