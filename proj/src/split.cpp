#include "vseg/split.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "vseg/errors.hpp"
#include "vseg/rng.hpp"

namespace vseg {
namespace {

struct Patient {
    std::string id;
    std::vector<std::size_t> items; // indices into the input list
};

// Patients sorted by id, then Fisher-Yates shuffled by seed.
std::vector<Patient> shuffled_patients(const std::vector<ItemRef>& items, std::uint64_t seed)
{
    std::map<std::string, std::vector<std::size_t>> grouped;
    for (std::size_t i = 0; i < items.size(); ++i)
        grouped[items[i].patient_id].push_back(i);
    std::vector<Patient> patients;
    for (auto& [id, idx] : grouped)
        patients.push_back({id, std::move(idx)});
    Rng rng(seed);
    for (std::size_t i = patients.size(); i > 1; --i)
        std::swap(patients[i - 1], patients[rng.below(i)]);
    return patients;
}

// Seeds each partition with one patient, then hands every remaining patient to
// the partition furthest below its target image count.
std::vector<std::vector<std::size_t>> greedy_partition(const std::vector<Patient>& patients,
                                                       const std::vector<double>& ratios)
{
    const std::size_t parts = ratios.size();
    std::size_t total = 0;
    for (const auto& p : patients)
        total += p.items.size();

    std::vector<std::vector<std::size_t>> out(parts);
    std::vector<double> count(parts, 0);
    std::size_t next = 0;
    for (std::size_t k = 0; k < parts && next < patients.size(); ++k) {
        if (ratios[k] <= 0)
            continue;
        out[k].insert(out[k].end(), patients[next].items.begin(), patients[next].items.end());
        count[k] += static_cast<double>(patients[next].items.size());
        ++next;
    }
    for (; next < patients.size(); ++next) {
        std::size_t best = 0;
        double best_deficit = -1e300;
        for (std::size_t k = 0; k < parts; ++k) {
            if (ratios[k] <= 0)
                continue;
            const double deficit = ratios[k] * static_cast<double>(total) - count[k];
            if (deficit > best_deficit) {
                best_deficit = deficit;
                best = k;
            }
        }
        out[best].insert(out[best].end(), patients[next].items.begin(), patients[next].items.end());
        count[best] += static_cast<double>(patients[next].items.size());
    }
    return out;
}

std::vector<std::string> ids_in_input_order(const std::vector<ItemRef>& items, std::vector<std::size_t> idx)
{
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> out;
    out.reserve(idx.size());
    for (std::size_t i : idx)
        out.push_back(items[i].id);
    return out;
}

} // namespace

SplitPlan split(const std::vector<ItemRef>& items, std::array<double, 3> ratios, std::uint64_t seed)
{
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
        throw SplitError("split ratios must be non-negative and sum to 1");
    const auto patients = shuffled_patients(items, seed);
    if (patients.size() < 3)
        throw SplitError("split needs at least 3 patients, got " + std::to_string(patients.size()));

    const auto parts = greedy_partition(patients, {ratios[0], ratios[1], ratios[2]});
    SplitPlan plan;
    plan.seed = seed;
    plan.train = ids_in_input_order(items, parts[0]);
    plan.val = ids_in_input_order(items, parts[1]);
    plan.test = ids_in_input_order(items, parts[2]);
    return plan;
}

std::vector<SplitPlan> kfold(const std::vector<ItemRef>& items, int k, std::uint64_t seed)
{
    if (k < 2)
        throw SplitError("kfold needs k >= 2");
    const auto patients = shuffled_patients(items, seed);
    if (patients.size() < static_cast<std::size_t>(k))
        throw SplitError("kfold with k=" + std::to_string(k) + " needs at least k patients, got " +
                         std::to_string(patients.size()));

    // Balance image counts: each patient goes to the currently smallest fold.
    std::vector<std::vector<std::size_t>> fold_patients(k);
    std::vector<std::size_t> fold_size(k, 0);
    for (std::size_t p = 0; p < patients.size(); ++p) {
        const auto smallest = std::min_element(fold_size.begin(), fold_size.end()) - fold_size.begin();
        fold_patients[smallest].push_back(p);
        fold_size[smallest] += patients[p].items.size();
    }

    std::vector<SplitPlan> plans;
    for (int f = 0; f < k; ++f) {
        std::vector<std::size_t> test;
        for (std::size_t p : fold_patients[f])
            test.insert(test.end(), patients[p].items.begin(), patients[p].items.end());
        std::vector<Patient> rest;
        for (std::size_t p = 0; p < patients.size(); ++p)
            if (std::find(fold_patients[f].begin(), fold_patients[f].end(), p) == fold_patients[f].end())
                rest.push_back(patients[p]);

        SplitPlan plan;
        plan.seed = seed;
        plan.test = ids_in_input_order(items, test);
        if (rest.size() >= 2) {
            const auto parts = greedy_partition(rest, {7.0 / 8.0, 1.0 / 8.0});
            plan.train = ids_in_input_order(items, parts[0]);
            plan.val = ids_in_input_order(items, parts[1]);
        } else {
            std::vector<std::size_t> all;
            for (const auto& p : rest)
                all.insert(all.end(), p.items.begin(), p.items.end());
            plan.train = ids_in_input_order(items, all);
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

} // namespace vseg
