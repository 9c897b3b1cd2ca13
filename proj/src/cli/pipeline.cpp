#include "sgxp/cli/pipeline.hpp"

#include <algorithm>

#include "sgxp/core/errors.hpp"
#include "sgxp/core/random.hpp"
#include "sgxp/data/image_io.hpp"
#include "sgxp/data/split.hpp"

namespace sgxp {

namespace fs = std::filesystem;

fs::path image_path(const Manifest& m, const SampleRecord& r, const DataPaths& paths) {
    if (!paths.image_dir.empty()) return paths.image_dir / (r.id + ".pgm");
    return m.resolve(r);
}

fs::path mask_path(const Manifest& m, const SampleRecord& r, const DataPaths& paths) {
    if (!paths.mask_dir.empty()) return paths.mask_dir / (r.id + ".pgm");
    return m.resolve(r).parent_path().parent_path() / "masks" / (r.id + ".pgm");
}

Image load_sample_image(const Manifest& m, const SampleRecord& r, const DataPaths& paths, std::size_t working_size) {
    return load_image(image_path(m, r, paths), working_size);
}

BinaryMask load_sample_mask(const Manifest& m, const SampleRecord& r, const DataPaths& paths, std::size_t working_size) {
    const BinaryMask mask = load_mask(mask_path(m, r, paths));
    if (working_size == 0 || mask.same_size(working_size, working_size)) return mask;
    return resize_nearest(mask, working_size, working_size);
}

Manifest ensure_split(Manifest manifest, const SplitSpec& spec, std::vector<std::string>* warnings) {
    if (manifest.has_split()) return manifest;
    SplitResult split = constrained_split(manifest, spec);
    if (warnings) warnings->insert(warnings->end(), split.warnings.begin(), split.warnings.end());
    return apply_split(std::move(manifest), split);
}

std::vector<std::size_t> records_in(const Manifest& m, Split split) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        if (m.records[i].split == split) out.push_back(i);
    }
    return out;
}

Task make_task(const Manifest& m, ExperimentMode mode) {
    Task task;
    task.labels.resize(m.records.size());
    if (mode == ExperimentMode::covid_generalization_2fold) {
        task.classes = {"negative", "covid19"};
        for (std::size_t i = 0; i < m.records.size(); ++i) task.labels[i] = m.records[i].class_label == "covid19" ? 1 : 0;
        return task;
    }
    const Manifest labelled = mode == ExperimentMode::source_bias ? relabel_by_source(m) : m;
    const std::vector<std::string_view> wanted =
        mode == ExperimentMode::source_bias ? std::vector<std::string_view>{"cohen", "rsna", "other"}
                                            : std::vector<std::string_view>{"lung_opacity", "covid19", "normal"};
    for (const auto& c : present_classes(labelled)) {
        if (std::find(wanted.begin(), wanted.end(), c) != wanted.end()) task.classes.push_back(c);
    }
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto it = std::find(task.classes.begin(), task.classes.end(), labelled.records[i].class_label);
        if (it != task.classes.end()) task.labels[i] = static_cast<std::size_t>(it - task.classes.begin());
    }
    return task;
}

PreparedInput prepare_sample(const Image& image, const BinaryMask* mask, std::size_t input_size) {
    PreparedInput p;
    p.height = image.height;
    p.width = image.width;
    if (mask) {
        if (!mask->same_size(image)) throw ArgumentError("mask and image sizes differ");
        RoiCrop crop = crop_to_roi(image, *mask, input_size);
        p.input = std::move(crop.image);
        p.box = crop.box;
    } else {
        p.input = resize_bilinear(image, input_size, input_size);
    }
    return p;
}

Image to_image_frame(const Image& map, const PreparedInput& p) {
    if (p.box) return uncrop(map, *p.box, p.height, p.width);
    return resize_bilinear(map, p.height, p.width);
}

std::vector<LabeledImage> VariantData::labeled() const {
    std::vector<LabeledImage> out;
    out.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back({inputs[i].input, labels[i]});
    return out;
}

VariantData build_variant_data(const Manifest& m, const std::vector<std::size_t>& records, const Task& task,
                               bool segmented, const DataPaths& paths, const ExperimentConfig& config) {
    VariantData data;
    const std::size_t size = config.model.classifier.input_size;
    for (const std::size_t i : records) {
        if (!task.labels.at(i)) continue;
        const SampleRecord& r = m.records[i];
        const Image image = load_sample_image(m, r, paths, config.model.image_size);
        PreparedInput input;
        if (segmented) {
            BinaryMask mask = load_sample_mask(m, r, paths, 0);
            if (!mask.same_size(image)) mask = resize_nearest(mask, image.height, image.width);
            try {
                input = prepare_sample(image, &mask, size);
            } catch (const EmptyRoi&) {
                data.skipped.push_back(r.id);
                continue;
            }
        } else {
            input = prepare_sample(image, nullptr, size);
        }
        data.records.push_back(i);
        data.inputs.push_back(std::move(input));
        data.labels.push_back(*task.labels[i]);
    }
    return data;
}

ClfTrainResult train_classifier(const VariantData& train, const VariantData& val, std::size_t n_classes,
                                const ExperimentConfig& config) {
    if (train.inputs.empty()) throw ValidationError("no training images");
    Network<float> model = build_classifier(config.model.classifier, n_classes);
    model.initialize(derive_seed(config.seed, "clf-init"));
    return train_two_phase(std::move(model), train.labeled(), val.labeled(), config.schedule.classifier,
                           config.augmentation.classifier);
}

VariantEvaluation evaluate_classifier(const Network<float>& model, const VariantData& data,
                                      const std::vector<std::string>& classes,
                                      const std::vector<std::string>& exclude_from_macro) {
    if (data.inputs.empty()) throw ValidationError("the evaluation split has no usable images");
    VariantEvaluation out;
    std::vector<Image> images;
    images.reserve(data.inputs.size());
    for (const auto& p : data.inputs) images.push_back(p.input);
    out.probabilities = predict_proba(model, images);
    for (const auto& p : out.probabilities) out.predictions.push_back(argmax(p));
    out.report = evaluate(out.predictions, data.labels, classes, exclude_from_macro);
    return out;
}

ExplainedSample explain_sample(const Network<float>& model, const PreparedInput& input, const std::string& id,
                               std::size_t target, const ExperimentConfig& config) {
    ExplainedSample out;
    out.id = id;
    out.target = target;
    if (config.model.explain == ExplainMethod::gradcam) {
        out.cam = to_image_frame(gradcam(model, input.input, target), input);
        out.mask = cam_to_mask(out.cam, config.model.cam_threshold);
        return out;
    }
    const Blackbox blackbox = [&model](const std::vector<Image>& batch) { return predict_proba(model, batch); };
    Rng rng(derive_seed(config.seed, "lime:" + id));
    Explanation e = lime_explain(input.input, blackbox, target, config.model.lime, rng);
    e.image_id = id;
    const BinaryMask local = explanation_to_mask(e, e.segments);
    Image as_float(local.height, local.width);
    for (std::size_t i = 0; i < local.size(); ++i) as_float.data[i] = local.data[i] ? 1.0f : 0.0f;
    const Image framed = to_image_frame(as_float, input);
    out.mask = BinaryMask(framed.height, framed.width);
    for (std::size_t i = 0; i < framed.size(); ++i) out.mask.data[i] = framed.data[i] >= 0.5f ? 1 : 0;
    out.lime = std::move(e);
    return out;
}

std::map<std::string, AggregateHeatmap> aggregate_by_class(const std::vector<ExplainedSample>& samples,
                                                           const std::vector<std::string>& classes,
                                                           const std::string& model_id, const std::string& method) {
    std::map<std::string, AggregateHeatmap> out;
    if (samples.empty()) return out;
    const std::size_t h = samples.front().mask.height, w = samples.front().mask.width;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<BinaryMask> masks;
        for (const auto& s : samples) {
            if (s.target != c) continue;
            masks.push_back(s.mask.same_size(h, w) ? s.mask : resize_nearest(s.mask, h, w));
        }
        if (masks.empty()) continue;
        out.emplace(classes[c], aggregate(masks, HeatmapMeta{model_id, classes[c], method, 0}));
    }
    return out;
}

double region_mass(const Grid<double>& map, const BinaryMask& region) {
    if (!map.same_size(region)) throw ArgumentError("map and region sizes differ");
    double inside = 0.0, total = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i) {
        total += map.data[i];
        if (region.data[i]) inside += map.data[i];
    }
    return total > 0.0 ? inside / total : 0.0;
}

void save_classifier(const fs::path& path, const Network<float>& model, const std::vector<std::string>& classes,
                     const ExperimentConfig& config) {
    save_checkpoint(path, model,
                    {{"kind", "classifier"},
                     {"classes", classes},
                     {"mode", to_string(config.mode)},
                     {"segmented", config.segmented},
                     {"input_size", config.model.classifier.input_size},
                     {"image_size", config.model.image_size}});
}

LoadedClassifier load_classifier(const fs::path& path) {
    Checkpoint ckpt = load_checkpoint(path);
    const auto& meta = ckpt.metadata;
    if (!meta.contains("kind") || meta.at("kind") != "classifier") {
        throw ValidationError(path.string() + " is not a classifier checkpoint");
    }
    LoadedClassifier out{std::move(ckpt.network), meta.at("classes").get<std::vector<std::string>>(),
                         meta.at("segmented").get<bool>(), meta.at("image_size").get<std::size_t>()};
    return out;
}

namespace {

VariantOutcome run_variant(const Manifest& m, const Task& task, bool segmented, const ExperimentConfig& config,
                           const ComparisonOptions& options) {
    VariantOutcome out;
    out.name = segmented ? "segmented" : "full";
    out.segmented = segmented;
    const VariantData train = build_variant_data(m, records_in(m, Split::train), task, segmented, options.paths, config);
    const VariantData val = build_variant_data(m, records_in(m, Split::val), task, segmented, options.paths, config);
    const VariantData test = build_variant_data(m, records_in(m, Split::test), task, segmented, options.paths, config);
    for (const auto* d : {&train, &val, &test}) out.skipped.insert(out.skipped.end(), d->skipped.begin(), d->skipped.end());

    std::vector<bool> seen(task.classes.size(), false);
    for (const auto l : train.labels) seen[l] = true;
    for (std::size_t c = 0; c < seen.size(); ++c) {
        if (!seen[c]) throw ValidationError(out.name + " variant has no training image of class " + task.classes[c]);
    }

    out.trained = train_classifier(train, val, task.classes.size(), config);
    out.test = evaluate_classifier(out.trained.model, test, task.classes, config.evaluation.exclude_from_macro);
    if (!options.clean_image_dir.empty()) {
        DataPaths clean_paths = options.paths;
        clean_paths.image_dir = options.clean_image_dir;
        if (clean_paths.mask_dir.empty()) {
            // Masks stay where the original images point.
            clean_paths.mask_dir = mask_path(m, m.records.front(), options.paths).parent_path();
        }
        const VariantData clean = build_variant_data(m, test.records, task, segmented, clean_paths, config);
        out.clean = evaluate_classifier(out.trained.model, clean, task.classes, config.evaluation.exclude_from_macro);
    }
    if (options.explain) {
        std::vector<ExplainedSample> samples;
        for (std::size_t i = 0; i < test.inputs.size(); ++i) {
            samples.push_back(
                explain_sample(out.trained.model, test.inputs[i], m.records[test.records[i]].id, test.labels[i], config));
        }
        const std::string method = config.model.explain == ExplainMethod::lime ? "lime" : "gradcam";
        out.heatmaps = aggregate_by_class(samples, task.classes, out.name, method);
        if (!samples.empty()) {
            std::vector<BinaryMask> masks;
            for (const auto& s : samples) masks.push_back(s.mask);
            out.heatmaps.emplace("all", aggregate(masks, HeatmapMeta{out.name, "all", method, 0}));
            if (options.strip_region) out.strip_mass = region_mass(out.heatmaps.at("all").map, *options.strip_region);
        }
    }
    return out;
}

nlohmann::json evaluation_json(const VariantEvaluation& e) {
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& c : e.report.per_class) per_class[c.name] = c.f1;
    return {{"per_class_f1", per_class}, {"macro_f1", e.report.macro_f1}, {"accuracy", e.report.accuracy},
            {"report", to_json(e.report)}};
}

}  // namespace

ComparisonResult run_pipeline_comparison(const Manifest& manifest, const ExperimentConfig& config,
                                         const ComparisonOptions& options) {
    const Manifest m = ensure_split(manifest, config.schedule.split);
    const Task task = make_task(m, config.mode);
    if (task.classes.size() < 2) throw ValidationError("the manifest holds fewer than two classes for this mode");
    ComparisonResult result;
    result.classes = task.classes;
    result.variants[0] = run_variant(m, task, true, config, options);
    result.variants[1] = run_variant(m, task, false, config, options);
    if (result.variants[0].test.report.classes != result.variants[1].test.report.classes) {
        throw ValidationError("the variants report different class sets");
    }
    std::vector<double> a, b;
    for (std::size_t c = 0; c < task.classes.size(); ++c) {
        a.push_back(result.variants[0].test.report.per_class[c].f1);
        b.push_back(result.variants[1].test.report.per_class[c].f1);
    }
    result.wilcoxon = wilcoxon_signed_rank(a, b);
    return result;
}

nlohmann::json to_json(const ComparisonResult& r) {
    nlohmann::json variants = nlohmann::json::array();
    for (const auto& v : r.variants) {
        nlohmann::json j = evaluation_json(v.test);
        j["name"] = v.name;
        j["segmented"] = v.segmented;
        j["skipped"] = v.skipped;
        j["history"] = v.trained.history;
        if (v.clean) {
            j["clean"] = evaluation_json(*v.clean);
            j["clean_accuracy_drop"] = v.test.report.accuracy - v.clean->report.accuracy;
        }
        if (v.strip_mass) j["strip_mass"] = *v.strip_mass;
        nlohmann::json maps = nlohmann::json::array();
        for (const auto& [name, h] : v.heatmaps) maps.push_back(to_json(h.meta));
        j["heatmaps"] = maps;
        variants.push_back(j);
    }
    nlohmann::json out = {{"classes", r.classes}, {"variants", variants}, {"wilcoxon", to_json(r.wilcoxon)}};
    if (r.variants[0].strip_mass && r.variants[1].strip_mass) {
        const double seg = *r.variants[0].strip_mass, full = *r.variants[1].strip_mass;
        out["strip_mass_ratio"] = seg > 0.0 ? nlohmann::json(full / seg) : nlohmann::json(nullptr);
    }
    return out;
}

}  // namespace sgxp
