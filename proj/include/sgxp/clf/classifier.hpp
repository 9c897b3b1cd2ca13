#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgxp/augment/augment.hpp"
#include "sgxp/core/optimizer.hpp"
#include "sgxp/core/training.hpp"

namespace sgxp {

struct ClassifierConfig {
    std::size_t input_size = 48;
    /// One conv-BN-ReLU-maxpool block per entry; these parameters are the freezable backbone.
    std::vector<std::size_t> block_channels{8, 16, 32};
    /// Each unit count becomes Dense-ReLU-Dropout-BatchNorm.
    std::vector<std::size_t> head_units{1024, 1024, 512};
    double dropout_rate = 0.3;

    void validate() const;
};

void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);

/// Backbone nodes are named block{i}_conv/_bn/_relu/_pool, head nodes fc{i}_*, then "logits"
/// and "softmax". The network is not initialized.
Network<float> build_classifier(const ClassifierConfig& config, std::size_t n_classes);

struct LabeledImage {
    Image image;
    std::size_t label = 0;
};

struct TrainSchedule {
    std::size_t warmup_epochs = 50;
    double warmup_lr = 1e-3;
    std::size_t finetune_epochs = 100;
    double finetune_lr = 1e-4;
    std::size_t batch_size = 40;
    PlateauConfig plateau;
    std::uint64_t seed = 0;
    /// Restore the best monitored epoch at the end of each phase.
    bool keep_best = true;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainSchedule& s);
void from_json(const nlohmann::json& j, TrainSchedule& s);

struct PhaseSpec {
    std::string name;
    std::size_t epochs = 0;
    double learning_rate = 1e-3;
    bool freeze_backbone = false;
};

struct ClfTrainResult {
    Network<float> model;
    std::vector<EpochRecord> history;
};

/// One training phase with a fresh Adam state and plateau schedule. Randomness derives from
/// (schedule.seed, phase.name), so a phase does not depend on what ran before it.
ClfTrainResult train_phase(Network<float> model, const std::vector<LabeledImage>& train,
                           const std::vector<LabeledImage>& val, const PhaseSpec& phase,
                           const TrainSchedule& schedule, const AugmentationConfig& augmentation);

/// Warm-up with the backbone frozen, then fine-tuning of every parameter. Images must already
/// have the model's input size; every class needs at least one training image.
ClfTrainResult train_two_phase(Network<float> model, const std::vector<LabeledImage>& train,
                               const std::vector<LabeledImage>& val, const TrainSchedule& schedule,
                               const AugmentationConfig& augmentation);

/// Mean cross-entropy in eval mode.
double classification_loss(const Network<float>& model, const std::vector<LabeledImage>& samples,
                           std::size_t batch_size = 64);

/// Softmax output for one image of exactly the model's input size.
std::vector<double> predict_proba(const Network<float>& model, const Image& image);
std::vector<std::vector<double>> predict_proba(const Network<float>& model, const std::vector<Image>& images,
                                               std::size_t batch_size = 64);
std::size_t argmax(const std::vector<double>& v);

/// Classifier input: the ROI crop when a lung mask is given, otherwise the whole image, resized
/// (bilinear) to size x size. Throws EmptyRoi for an empty mask.
Image prepare_input(const Image& image, const BinaryMask* roi, std::size_t size);

}  // namespace sgxp
