#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgxp/data/manifest.hpp"

namespace sgxp {

struct SplitSpec {
    double test_fraction = 0.2;
    /// Fraction of the non-test part.
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
    bool group_patients = true;
    bool stratify_source = true;
    bool balance_classes = true;

    void validate() const;
};

void to_json(nlohmann::json& j, const SplitSpec& s);
void from_json(const nlohmann::json& j, SplitSpec& s);

struct SplitResult {
    /// Aligned with manifest.records.
    std::vector<Split> assignment;
    std::vector<std::string> warnings;
};

/// Greedy assignment of patient groups, largest first (ties by a seeded hash of the patient
/// id), each to the split with the largest relative deficit over the group's (class, source)
/// cells; ties prefer train, then val. Groups larger than the test target go to train with a
/// warning. Independent of record order.
SplitResult constrained_split(const Manifest& manifest, const SplitSpec& spec);

/// Copy of the manifest with the split column filled in.
Manifest apply_split(Manifest manifest, const SplitResult& split);

struct Fold {
    /// Indices into manifest.records.
    std::vector<std::size_t> negatives;
    std::vector<std::size_t> positives;
};

/// Two folds for the covid19-vs-rest generalization experiment. Fold 1 holds every record of
/// the largest covid19 source, fold 2 every record of the other covid19 sources. Sources without
/// covid19 are negatives only: the largest is split by seeded random halves of its patients,
/// the rest go to fold 2. Throws ConfigError unless covid19 comes from at least two sources.
std::array<Fold, 2> make_generalization_folds(const Manifest& manifest, std::uint64_t seed = 0);

}  // namespace sgxp
