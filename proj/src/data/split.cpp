#include "sgxp/data/split.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "sgxp/core/errors.hpp"
#include "sgxp/core/random.hpp"

namespace sgxp {

void SplitSpec::validate() const {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
}

void to_json(nlohmann::json& j, const SplitSpec& s) {
    j = {{"test_fraction", s.test_fraction},     {"val_fraction", s.val_fraction},
         {"seed", s.seed},                       {"group_patients", s.group_patients},
         {"stratify_source", s.stratify_source}, {"balance_classes", s.balance_classes}};
}

void from_json(const nlohmann::json& j, SplitSpec& s) {
    SplitSpec d = s;
    if (j.contains("test_fraction")) d.test_fraction = j.at("test_fraction").get<double>();
    if (j.contains("val_fraction")) d.val_fraction = j.at("val_fraction").get<double>();
    if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("group_patients")) d.group_patients = j.at("group_patients").get<bool>();
    if (j.contains("stratify_source")) d.stratify_source = j.at("stratify_source").get<bool>();
    if (j.contains("balance_classes")) d.balance_classes = j.at("balance_classes").get<bool>();
    d.validate();
    s = d;
}

SplitResult constrained_split(const Manifest& manifest, const SplitSpec& spec) {
    spec.validate();
    const auto& recs = manifest.records;
    SplitResult result;
    result.assignment.assign(recs.size(), Split::train);
    if (recs.empty()) return result;

    std::map<std::string, std::vector<std::size_t>> groups;
    std::map<std::string, std::size_t> cell_index;
    std::vector<std::size_t> cell_of(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        groups[spec.group_patients ? recs[i].patient_id : recs[i].id].push_back(i);
        const std::string cell = (spec.balance_classes ? recs[i].class_label : std::string()) + '\x1f' +
                                 (spec.stratify_source ? recs[i].source : std::string());
        cell_of[i] = cell_index.emplace(cell, cell_index.size()).first->second;
    }
    const std::size_t n_cells = cell_index.size();
    std::vector<double> total(n_cells, 0.0);
    for (std::size_t c : cell_of) total[c] += 1.0;

    const std::array<double, 3> target = {(1.0 - spec.test_fraction) * (1.0 - spec.val_fraction),
                                          (1.0 - spec.test_fraction) * spec.val_fraction, spec.test_fraction};
    const double test_capacity = spec.test_fraction * static_cast<double>(recs.size());

    struct Group {
        std::string key;
        std::vector<std::size_t> members;
        std::uint64_t hash;
    };
    std::vector<Group> order;
    for (auto& [key, members] : groups) order.push_back({key, members, derive_seed(spec.seed, key)});
    std::sort(order.begin(), order.end(), [](const Group& a, const Group& b) {
        if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
        if (a.hash != b.hash) return a.hash < b.hash;
        return a.key < b.key;
    });

    std::array<std::vector<double>, 3> assigned;
    for (auto& a : assigned) a.assign(n_cells, 0.0);
    for (const auto& g : order) {
        std::size_t best = 0;
        if (static_cast<double>(g.members.size()) > test_capacity) {
            result.warnings.push_back("patient group '" + g.key + "' has " + std::to_string(g.members.size()) +
                                      " records, more than the test target; kept in train");
        } else {
            double best_score = -std::numeric_limits<double>::infinity();
            for (std::size_t s = 0; s < 3; ++s) {
                double score = 0.0;
                for (std::size_t i : g.members) {
                    const std::size_t c = cell_of[i];
                    const double want = target[s] * total[c];
                    score += (want - assigned[s][c]) / want;
                }
                if (score > best_score + 1e-12) {
                    best_score = score;
                    best = s;
                }
            }
        }
        for (std::size_t i : g.members) {
            assigned[best][cell_of[i]] += 1.0;
            result.assignment[i] = static_cast<Split>(best);
        }
    }
    return result;
}

Manifest apply_split(Manifest manifest, const SplitResult& split) {
    if (split.assignment.size() != manifest.records.size()) throw ArgumentError("split does not match the manifest");
    for (std::size_t i = 0; i < split.assignment.size(); ++i) manifest.records[i].split = split.assignment[i];
    return manifest;
}

std::array<Fold, 2> make_generalization_folds(const Manifest& manifest, std::uint64_t seed) {
    const auto& recs = manifest.records;
    std::map<std::string, std::size_t> covid_count, record_count;
    for (const auto& r : recs) {
        ++record_count[r.source];
        if (r.class_label == "covid19") ++covid_count[r.source];
    }
    if (covid_count.size() < 2) {
        throw ConfigError("the generalization folds need covid19 records from at least two sources, found " +
                          std::to_string(covid_count.size()));
    }
    // Ties resolve to the alphabetically first source (map order).
    auto largest = [](const std::map<std::string, std::size_t>& counts) {
        return std::max_element(counts.begin(), counts.end(),
                                [](const auto& a, const auto& b) { return a.second < b.second; })->first;
    };
    const std::string anchor = largest(covid_count);
    std::map<std::string, std::size_t> negative_only;
    for (const auto& [source, n] : record_count) {
        if (!covid_count.count(source)) negative_only[source] = n;
    }
    const std::string shared = negative_only.empty() ? std::string() : largest(negative_only);

    // Seeded halves of the shared source's patients; the first half goes to fold 1.
    std::map<std::string, std::uint64_t> patients;
    for (const auto& r : recs) {
        if (r.source == shared) patients.emplace(r.patient_id, derive_seed(seed, "generalization_folds:" + r.patient_id));
    }
    std::vector<std::pair<std::uint64_t, std::string>> shuffled;
    for (const auto& [pid, h] : patients) shuffled.emplace_back(h, pid);
    std::sort(shuffled.begin(), shuffled.end());
    std::map<std::string, int> half;
    for (std::size_t i = 0; i < shuffled.size(); ++i) half[shuffled[i].second] = i < shuffled.size() / 2 ? 0 : 1;

    std::array<Fold, 2> folds;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        int f = 1;
        if (r.source == anchor) f = 0;
        else if (!shared.empty() && r.source == shared) f = half.at(r.patient_id);
        auto& fold = folds[static_cast<std::size_t>(f)];
        (r.class_label == "covid19" ? fold.positives : fold.negatives).push_back(i);
    }
    return folds;
}

}  // namespace sgxp
