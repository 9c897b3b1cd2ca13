#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgxp/augment/augment.hpp"
#include "sgxp/clf/classifier.hpp"
#include "sgxp/data/split.hpp"
#include "sgxp/seg/train.hpp"
#include "sgxp/seg/unet.hpp"
#include "sgxp/xai/lime.hpp"

namespace sgxp {

enum class ExperimentMode { multiclass, covid_generalization_2fold, source_bias };

std::string_view to_string(ExperimentMode m);
ExperimentMode parse_experiment_mode(std::string_view s);

enum class ExplainMethod { lime, gradcam };

struct ModelSpec {
    ClassifierConfig classifier;
    UNetConfig unet;
    LimeConfig lime;
    /// Grad-CAM maps become masks at this fraction of their maximum.
    double cam_threshold = 0.5;
    ExplainMethod explain = ExplainMethod::lime;
    /// Working resolution images are resized to on load; 0 keeps the stored size.
    std::size_t image_size = 0;
};

struct ScheduleSpec {
    TrainSchedule classifier;
    SegTrainConfig segmentation;
    SplitSpec split;
};

struct AugmentationSpec {
    AugmentationConfig classifier = AugmentationConfig::classification();
    AugmentationConfig segmentation = AugmentationConfig::segmentation();
};

struct EvaluationSpec {
    /// Classes left out of macro-F1 (they still get per-class scores).
    std::vector<std::string> exclude_from_macro;
};

/// Top-level keys {mode, segmented, model, schedule, augmentation, evaluation, seed}; anything else is a
/// ConfigError. Component seeds are not read: resolve() derives them from `seed`.
struct ExperimentConfig {
    ExperimentMode mode = ExperimentMode::multiclass;
    bool segmented = true;
    ModelSpec model;
    ScheduleSpec schedule;
    AugmentationSpec augmentation;
    EvaluationSpec evaluation;
    std::uint64_t seed = 0;

    void validate() const;
    /// Seeds of the split, segmentation training and classifier training from hash(seed, purpose).
    ExperimentConfig resolved() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Applies "a.b.c=value" to a JSON document; value is parsed as JSON, or taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace sgxp
