#pragma once

#include <vector>

#include "sgxp/augment/augment.hpp"
#include "sgxp/core/optimizer.hpp"
#include "sgxp/core/training.hpp"

namespace sgxp {

struct SegTrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double initial_lr = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    PlateauConfig plateau;
    std::uint64_t seed = 0;
    /// Restore the weights of the epoch with the lowest monitored loss at the end.
    bool keep_best = true;

    void validate() const;
};

void to_json(nlohmann::json& j, const SegTrainConfig& c);
void from_json(const nlohmann::json& j, SegTrainConfig& c);

struct SegTrainResult {
    Network<float> model;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

/// Soft-Jaccard training with Adam and the plateau schedule. The validation loss is monitored
/// when `val` is non-empty, the training loss otherwise.
SegTrainResult train_segmenter(Network<float> model, const std::vector<PairedSample>& train,
                               const std::vector<PairedSample>& val, const SegTrainConfig& config,
                               const AugmentationConfig& augmentation);

/// Mean per-sample soft-Jaccard loss in eval mode.
double segmentation_loss(const Network<float>& model, const std::vector<PairedSample>& samples,
                         std::size_t batch_size = 16);

}  // namespace sgxp
