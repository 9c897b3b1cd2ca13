#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sgxp/core/network.hpp"

namespace sgxp {

struct EpochRecord {
    std::string phase;
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double learning_rate = 0.0;
};

void to_json(nlohmann::json& j, const EpochRecord& r);

/// Copy of every parameter and buffer value, for best-epoch restore.
template <typename T>
struct WeightSnapshot {
    std::vector<BasicTensor<T>> params;
    std::vector<BasicTensor<T>> buffers;

    static WeightSnapshot take(const Network<T>& net) {
        WeightSnapshot s;
        for (const auto& p : net.parameters()) s.params.push_back(p.value);
        for (const auto& b : net.buffers()) s.buffers.push_back(b.value);
        return s;
    }
    void restore(Network<T>& net) const {
        for (std::size_t i = 0; i < params.size(); ++i) net.parameters()[i].value = params[i];
        for (std::size_t i = 0; i < buffers.size(); ++i) net.buffers()[i].value = buffers[i];
    }
};

/// Deterministic permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace sgxp
