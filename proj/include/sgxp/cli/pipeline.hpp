#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgxp/cli/experiment.hpp"
#include "sgxp/clf/metrics.hpp"
#include "sgxp/core/checkpoint.hpp"
#include "sgxp/data/manifest.hpp"
#include "sgxp/seg/mask_ops.hpp"
#include "sgxp/xai/gradcam.hpp"

namespace sgxp {

/// Validation failure of a command's inputs (exit code 1).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Where a record's pixels come from. Empty members fall back to the manifest path for
/// images and to <image directory>/../masks/<id>.pgm for masks.
struct DataPaths {
    std::filesystem::path image_dir;
    std::filesystem::path mask_dir;
};

std::filesystem::path image_path(const Manifest& m, const SampleRecord& r, const DataPaths& paths);
std::filesystem::path mask_path(const Manifest& m, const SampleRecord& r, const DataPaths& paths);
/// Resized to working_size x working_size unless it is 0.
Image load_sample_image(const Manifest& m, const SampleRecord& r, const DataPaths& paths, std::size_t working_size);
BinaryMask load_sample_mask(const Manifest& m, const SampleRecord& r, const DataPaths& paths, std::size_t working_size);

/// Manifest with a split column: kept as is when present, otherwise filled by constrained_split.
Manifest ensure_split(Manifest manifest, const SplitSpec& spec, std::vector<std::string>* warnings = nullptr);
std::vector<std::size_t> records_in(const Manifest& m, Split split);

/// Class names and per-record label for an experiment mode; records without a label are skipped.
struct Task {
    std::vector<std::string> classes;
    std::vector<std::optional<std::size_t>> labels;
};
/// multiclass: diagnostic labels present; source_bias: cohen/rsna/other present;
/// covid_generalization_2fold: {negative, covid19}.
Task make_task(const Manifest& m, ExperimentMode mode);

/// Classifier input plus the geometry needed to map explanations back to the image.
struct PreparedInput {
    Image input;
    std::optional<BoundingBox> box;
    std::size_t height = 0;
    std::size_t width = 0;
};

/// ROI crop of the masked image when a mask is given (throws EmptyRoi), else the resized image.
PreparedInput prepare_sample(const Image& image, const BinaryMask* mask, std::size_t input_size);
/// Places a map over the classifier input back into the image frame.
Image to_image_frame(const Image& map, const PreparedInput& p);

struct VariantData {
    std::vector<std::size_t> records;
    std::vector<PreparedInput> inputs;
    std::vector<std::size_t> labels;
    /// Records whose mask was empty (they go back to review).
    std::vector<std::string> skipped;

    std::vector<LabeledImage> labeled() const;
};

VariantData build_variant_data(const Manifest& m, const std::vector<std::size_t>& records, const Task& task,
                               bool segmented, const DataPaths& paths, const ExperimentConfig& config);

/// Fresh classifier initialized from hash(seed, "clf-init") and trained in two phases.
ClfTrainResult train_classifier(const VariantData& train, const VariantData& val, std::size_t n_classes,
                                const ExperimentConfig& config);

struct VariantEvaluation {
    EvaluationReport report;
    std::vector<std::size_t> predictions;
    std::vector<std::vector<double>> probabilities;
};

/// Throws ValidationError when `data` is empty.
VariantEvaluation evaluate_classifier(const Network<float>& model, const VariantData& data,
                                      const std::vector<std::string>& classes,
                                      const std::vector<std::string>& exclude_from_macro = {});

struct ExplainedSample {
    std::string id;
    std::size_t target = 0;
    /// Explanation mask in the image frame.
    BinaryMask mask;
    /// Normalized Grad-CAM in the image frame (empty for LIME).
    Image cam;
    /// LIME result over the classifier input (empty for Grad-CAM).
    std::optional<Explanation> lime;
};

/// LIME randomness derives from hash(seed, "lime:" + id).
ExplainedSample explain_sample(const Network<float>& model, const PreparedInput& input, const std::string& id,
                               std::size_t target, const ExperimentConfig& config);

/// Mean explanation mask per class over the samples whose target is that class; masks of a
/// different size are resized (nearest) to the first one.
std::map<std::string, AggregateHeatmap> aggregate_by_class(const std::vector<ExplainedSample>& samples,
                                                           const std::vector<std::string>& classes,
                                                           const std::string& model_id, const std::string& method);

/// Fraction of the map's total mass inside `region` (0 for an all-zero map).
double region_mass(const Grid<double>& map, const BinaryMask& region);

/// Classifier checkpoint with {classes, mode, segmented, input_size, image_size} metadata.
void save_classifier(const std::filesystem::path& path, const Network<float>& model, const std::vector<std::string>& classes,
                     const ExperimentConfig& config);
struct LoadedClassifier {
    Network<float> model;
    std::vector<std::string> classes;
    bool segmented = false;
    std::size_t image_size = 0;
};
LoadedClassifier load_classifier(const std::filesystem::path& path);

struct ComparisonOptions {
    DataPaths paths;
    /// When set, both variants are also evaluated on <dir>/<id>.pgm (for example glyph-free copies).
    std::filesystem::path clean_image_dir;
    bool explain = true;
    /// When set, the fraction of aggregate heatmap mass inside this region is reported.
    std::optional<BinaryMask> strip_region;
};

struct VariantOutcome {
    std::string name;
    bool segmented = false;
    ClfTrainResult trained;
    VariantEvaluation test;
    std::optional<VariantEvaluation> clean;
    /// Per class, plus "all" over every explained test image.
    std::map<std::string, AggregateHeatmap> heatmaps;
    std::optional<double> strip_mass;
    std::vector<std::string> skipped;
};

struct ComparisonResult {
    std::vector<std::string> classes;
    /// {segmented, full}
    std::array<VariantOutcome, 2> variants;
    WilcoxonResult wilcoxon;
};

/// Trains and evaluates the segmented and the full-image variant with the same seeds on the
/// manifest's split (filled in by ensure_split when missing). Test images are explained with
/// their true class. Throws ValidationError when the variants end up with different class sets.
ComparisonResult run_pipeline_comparison(const Manifest& manifest, const ExperimentConfig& config,
                                         const ComparisonOptions& options);
/// {classes, variants: [{name, segmented, per_class_f1, macro_f1, accuracy, ...}], wilcoxon}
nlohmann::json to_json(const ComparisonResult& r);

}  // namespace sgxp
