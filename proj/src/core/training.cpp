#include "sgxp/core/training.hpp"

#include <numeric>

#include "sgxp/core/random.hpp"

namespace sgxp {

void to_json(nlohmann::json& j, const EpochRecord& r) {
    j = {{"phase", r.phase},
         {"epoch", r.epoch},
         {"train_loss", r.train_loss},
         {"val_loss", r.val_loss},
         {"learning_rate", r.learning_rate}};
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    // Fisher-Yates with our own uniform draw; std::shuffle is not portable across libraries.
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
    return idx;
}

}  // namespace sgxp
