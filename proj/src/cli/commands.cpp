#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "sgxp/cli/cli.hpp"
#include "sgxp/cli/experiment.hpp"
#include "sgxp/cli/pipeline.hpp"
#include "sgxp/core/errors.hpp"
#include "sgxp/data/image_io.hpp"
#include "sgxp/data/split.hpp"
#include "sgxp/data/synthetic.hpp"
#include "sgxp/review/server.hpp"
#include "sgxp/review/store.hpp"
#include "sgxp/seg/unet.hpp"

namespace sgxp {

namespace fs = std::filesystem;
using nlohmann::json;

std::string json_text(const json& doc) { return doc.dump(2) + "\n"; }

RunDir::RunDir(fs::path root) : root_(std::move(root)), started_(std::chrono::system_clock::now()) {
    fs::create_directories(root_);
}

fs::path RunDir::path(const std::string& relative) const {
    fs::path p = root_ / relative;
    fs::create_directories(p.parent_path());
    return p;
}

void RunDir::write(const std::string& relative, std::string_view bytes) const {
    write_file_atomic(root_ / relative, bytes);
}

void RunDir::write_json(const std::string& relative, const json& doc) const { write(relative, json_text(doc)); }

namespace {

std::string utc(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

}  // namespace

void RunDir::finish(const json& config, const json& report) const {
    write_json("config.json", config);
    write_json("report.json", report);
    write_json("timestamps.json", {{"started", utc(started_)}, {"finished", utc(std::chrono::system_clock::now())}});
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root_)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), root_).generic_string();
        if (rel != "files.manifest") files.push_back(rel);
    }
    files.push_back("files.manifest");
    std::sort(files.begin(), files.end());
    std::string text;
    for (const auto& f : files) text += f + "\n";
    write("files.manifest", text);
}

namespace {

// --- shared option handling ---------------------------------------------------

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    CLI::Option* seed_option = nullptr;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--set", c.sets, "Override a config key: dotted.key=value");
    c.seed_option = sub->add_option("--seed", c.seed, "Top-level seed");
}

json config_document(const Common& c) {
    json doc = json::object();
    if (!c.config.empty()) {
        try {
            doc = json::parse(read_file(c.config));
        } catch (const json::parse_error& e) {
            throw ConfigError("config " + c.config + " is not valid JSON: " + e.what());
        }
    }
    for (const auto& s : c.sets) apply_override(doc, s);
    if (c.seed_option && c.seed_option->count()) doc["seed"] = c.seed;
    return doc;
}

ExperimentConfig experiment_config(const Common& c) {
    ExperimentConfig config;
    from_json(config_document(c), config);
    return config.resolved();
}

json run_config(std::string_view command, const json& args, const json& resolved) {
    return {{"command", command}, {"args", args}, {"config", resolved}};
}

Manifest read_manifest(const std::string& path) {
    if (!fs::exists(path)) throw ValidationError("manifest not found: " + path);
    return load_manifest(path, false);
}

DataPaths data_paths(const std::string& image_dir, const std::string& mask_dir) {
    return {image_dir, mask_dir};
}

std::vector<std::size_t> select_records(const Manifest& m, const std::string& which, std::uint64_t fold_seed) {
    if (which == "all") {
        std::vector<std::size_t> all(m.records.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
    }
    if (which == "fold1" || which == "fold2") {
        const auto folds = make_generalization_folds(m, fold_seed);
        const Fold& f = folds[which == "fold1" ? 0 : 1];
        std::vector<std::size_t> out = f.negatives;
        out.insert(out.end(), f.positives.begin(), f.positives.end());
        std::sort(out.begin(), out.end());
        return out;
    }
    if (!m.has_split()) throw ValidationError("the manifest has no split column; run `split` first");
    return records_in(m, parse_split(which));
}

const CLI::Validator kSelection = CLI::IsMember({"all", "train", "val", "test", "fold1", "fold2"});

json counts_by(const Manifest& m, const std::vector<std::size_t>& idx, std::string SampleRecord::*field) {
    std::map<std::string, std::size_t> counts;
    for (const auto i : idx) ++counts[m.records[i].*field];
    return counts;
}

std::vector<std::size_t> all_indices(const Manifest& m) {
    std::vector<std::size_t> idx(m.records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

json mean_std(const std::vector<double>& v) {
    if (v.empty()) return {{"mean", nullptr}, {"std", nullptr}, {"n", 0}};
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (const double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return {{"mean", mean}, {"std", std::sqrt(var)}, {"n", v.size()}};
}

std::string relative_to(const fs::path& target, const fs::path& base) {
    return fs::relative(fs::absolute(target), fs::absolute(base)).generic_string();
}

std::string method_name(ExplainMethod m) { return m == ExplainMethod::lime ? "lime" : "gradcam"; }

Image mask_as_image(const BinaryMask& mask) {
    Image out(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.size(); ++i) out.data[i] = mask.data[i] ? 1.0f : 0.0f;
    return out;
}

// --- synth ----------------------------------------------------------------------

struct SynthArgs {
    Common common;
    std::string out;
    std::size_t n = 200, size = 64;
    bool bias = false, source_texture = false;
    std::string glyph_mode;
    double glyph_correlation = 0.0, source_correlation = 0.0, lesion_contrast = 0.0;
    CLI::App* app = nullptr;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    json doc = config_document(a.common);
    auto given = [&](const char* flag) { return a.app->get_option(flag)->count() > 0; };
    if (given("--n")) doc["n"] = a.n;
    if (given("--size")) doc["size"] = a.size;
    if (given("--bias")) doc["annotation_bias"] = true;
    if (given("--source-texture")) doc["source_texture"] = true;
    if (given("--glyph-mode")) doc["glyph_mode"] = a.glyph_mode;
    if (given("--glyph-correlation")) doc["glyph_correlation"] = a.glyph_correlation;
    if (given("--source-correlation")) doc["source_correlation"] = a.source_correlation;
    if (given("--lesion-contrast")) doc["lesion_contrast"] = a.lesion_contrast;
    SynthConfig config;
    from_json(doc, config);
    config.validate();

    const SyntheticCorpus corpus = generate_synthetic_corpus(config);
    RunDir run(a.out);
    write_corpus(corpus, config, run.root());
    const auto idx = all_indices(corpus.manifest);
    std::array<std::size_t, 3> corners{};
    for (const int c : corpus.glyph_corner) ++corners[static_cast<std::size_t>(c)];
    const json report = {{"n", corpus.manifest.records.size()},
                         {"classes", counts_by(corpus.manifest, idx, &SampleRecord::class_label)},
                         {"sources", counts_by(corpus.manifest, idx, &SampleRecord::source)},
                         {"glyph_corners", {{"none", corners[0]}, {"top_left", corners[1]}, {"top_right", corners[2]}}}};
    json config_json = config;
    run.finish(run_config("synth", {{"out", a.out}}, config_json), report);
    out << "wrote " << corpus.manifest.records.size() << " images to " << a.out << "\n";
    return 0;
}

// --- split ----------------------------------------------------------------------

struct SplitArgs {
    Common common;
    std::string manifest, out;
};

int cmd_split(const SplitArgs& a, std::ostream& out) {
    const ExperimentConfig config = experiment_config(a.common);
    Manifest m = read_manifest(a.manifest);
    const SplitResult split = constrained_split(m, config.schedule.split);
    Manifest result = apply_split(m, split);
    RunDir run(a.out);
    for (auto& r : result.records) r.image_path = relative_to(m.resolve(r), run.root());
    result.base_dir = run.root();
    run.write("manifest.csv", to_csv(result));

    json per_split = json::object();
    for (const Split s : {Split::train, Split::val, Split::test}) {
        const auto idx = records_in(result, s);
        std::set<std::string> patients;
        for (const auto i : idx) patients.insert(result.records[i].patient_id);
        per_split[std::string(to_string(s))] = {{"n", idx.size()},
                                                {"patients", patients.size()},
                                                {"classes", counts_by(result, idx, &SampleRecord::class_label)},
                                                {"sources", counts_by(result, idx, &SampleRecord::source)}};
    }
    const json report = {{"n", result.records.size()}, {"splits", per_split}, {"warnings", split.warnings}};
    run.finish(run_config("split", {{"manifest", a.manifest}, {"out", a.out}}, config), report);
    for (const auto& w : split.warnings) out << "warning: " << w << "\n";
    out << "split " << result.records.size() << " records into " << a.out << "/manifest.csv\n";
    return 0;
}

// --- segmentation -----------------------------------------------------------------

struct SegTrainArgs {
    Common common;
    std::string manifest, out, masks, image_dir, corrections;
};

struct Correction {
    fs::path image, mask;
};

std::map<std::string, Correction> read_corrections(const fs::path& dir) {
    const fs::path csv = dir / "corrections.csv";
    if (!fs::exists(csv)) throw ValidationError("no corrections.csv in " + dir.string());
    std::istringstream in(read_file(csv));
    std::string line;
    std::getline(in, line);
    if (line != "id,image,mask") throw ValidationError(csv.string() + " has an unexpected header");
    std::map<std::string, Correction> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto a = line.find(','), b = line.find(',', a == std::string::npos ? a : a + 1);
        if (a == std::string::npos || b == std::string::npos) throw ValidationError("malformed line in " + csv.string());
        out[line.substr(0, a)] = {dir / line.substr(a + 1, b - a - 1), dir / line.substr(b + 1)};
    }
    return out;
}

struct MaskScores {
    std::vector<double> dice, jaccard_distance;

    void add(const MaskMetrics& m) {
        dice.push_back(m.dice);
        jaccard_distance.push_back(m.jaccard_distance);
    }
    json to_json() const { return {{"dice", mean_std(dice)}, {"jaccard_distance", mean_std(jaccard_distance)}}; }
};

int cmd_seg_train(const SegTrainArgs& a, std::ostream& out) {
    const ExperimentConfig config = experiment_config(a.common);
    std::vector<std::string> warnings;
    const Manifest m = ensure_split(read_manifest(a.manifest), config.schedule.split, &warnings);
    const DataPaths paths = data_paths(a.image_dir, a.masks);
    const std::size_t size = config.model.unet.input_size;
    const auto corrections = a.corrections.empty() ? std::map<std::string, Correction>{} : read_corrections(a.corrections);

    auto paired = [&](const SampleRecord& r) {
        const auto c = corrections.find(r.id);
        const fs::path mpath = c != corrections.end() ? c->second.mask : mask_path(m, r, paths);
        if (!fs::exists(mpath)) throw ValidationError("no mask for '" + r.id + "': " + mpath.string());
        return PairedSample{load_sample_image(m, r, paths, size), resize_nearest(load_mask(mpath), size, size)};
    };
    std::vector<PairedSample> train, val;
    for (const auto i : records_in(m, Split::train)) train.push_back(paired(m.records[i]));
    for (const auto i : records_in(m, Split::val)) val.push_back(paired(m.records[i]));
    std::size_t extra = 0;
    for (const auto& [id, c] : corrections) {
        if (std::any_of(m.records.begin(), m.records.end(), [&](const SampleRecord& r) { return r.id == id; })) continue;
        train.push_back({load_image(c.image, size), resize_nearest(load_mask(c.mask), size, size)});
        ++extra;
    }
    if (train.empty()) throw ValidationError("the training split is empty");

    Network<float> model = build_unet(config.model.unet);
    model.initialize(derive_seed(config.seed, "seg-init"));
    SegTrainResult trained =
        train_segmenter(std::move(model), train, val, config.schedule.segmentation, config.augmentation.segmentation);

    MaskScores raw, post;
    for (const auto i : records_in(m, Split::test)) {
        const SampleRecord& r = m.records[i];
        const Image image = load_sample_image(m, r, paths, config.model.image_size);
        BinaryMask truth = load_mask(mask_path(m, r, paths));
        if (!truth.same_size(image)) truth = resize_nearest(truth, image.height, image.width);
        const BinaryMask predicted = predict_mask(trained.model, image);
        const int radius = default_morphology_radius(image.height);
        raw.add(mask_metrics(predicted, truth));
        post.add(mask_metrics(postprocess_mask(predicted, radius, radius), truth));
    }

    RunDir run(a.out);
    save_checkpoint(run.path("checkpoints/unet.ckpt"), trained.model,
                    {{"kind", "unet"}, {"image_size", config.model.image_size}});
    const json report = {{"best_epoch", trained.best_epoch},
                         {"history", trained.history},
                         {"n_train", train.size()},
                         {"n_val", val.size()},
                         {"n_corrections", corrections.size()},
                         {"n_extra_from_corrections", extra},
                         {"test", {{"raw", raw.to_json()}, {"postprocessed", post.to_json()}}},
                         {"warnings", warnings}};
    run.finish(run_config("seg-train",
                          {{"manifest", a.manifest}, {"masks", a.masks}, {"corrections", a.corrections}, {"out", a.out}},
                          config),
               report);
    const json& d = report["test"]["postprocessed"]["dice"]["mean"];
    out << "trained U-Net, best epoch " << trained.best_epoch << ", held-out Dice " << (d.is_null() ? "n/a" : d.dump())
        << "\n";
    return 0;
}

struct SegPredictArgs {
    Common common;
    std::string model, manifest, out, image_dir, truth, split = "all";
};

int cmd_seg_predict(const SegPredictArgs& a, std::ostream& out) {
    const ExperimentConfig config = experiment_config(a.common);
    if (!fs::exists(a.model)) throw ValidationError("model not found: " + a.model);
    const Checkpoint ckpt = load_checkpoint(a.model);
    if (ckpt.metadata.value("kind", "") != "unet") throw ValidationError(a.model + " is not a U-Net checkpoint");
    const std::size_t image_size = ckpt.metadata.value("image_size", std::size_t{0});
    const Manifest m = read_manifest(a.manifest);
    const DataPaths paths = data_paths(a.image_dir, a.truth);
    const auto idx = select_records(m, a.split, derive_seed(config.seed, "folds"));

    RunDir run(a.out);
    json items = json::array(), empty = json::array();
    MaskScores raw, post;
    for (const auto i : idx) {
        const SampleRecord& r = m.records[i];
        const Image image = load_sample_image(m, r, paths, image_size);
        const BinaryMask predicted = predict_mask(ckpt.network, image);
        const int radius = default_morphology_radius(image.height);
        const BinaryMask cleaned = postprocess_mask(predicted, radius, radius);
        const std::string rel = "masks/" + r.id + ".pgm";
        run.write(rel, encode_mask(cleaned));
        if (mask_area(cleaned) == 0) empty.push_back(r.id);
        // The review store copies the image as stored, so it must match the mask size.
        std::string image_rel;
        if (image_size == 0) {
            image_rel = relative_to(image_path(m, r, paths), run.root());
        } else {
            image_rel = "images/" + r.id + ".pgm";
            run.write(image_rel, encode_pgm(quantize(image)));
        }
        items.push_back({{"id", r.id}, {"image", image_rel}, {"mask", rel}});
        const fs::path truth = mask_path(m, r, paths);
        if (fs::exists(truth)) {
            BinaryMask t = load_mask(truth);
            if (!t.same_size(image)) t = resize_nearest(t, image.height, image.width);
            raw.add(mask_metrics(predicted, t));
            post.add(mask_metrics(cleaned, t));
        }
    }
    run.write_json("predictions.json", {{"items", items}});
    json report = {{"n", idx.size()}, {"empty_masks", empty}};
    if (!raw.dice.empty()) report["metrics"] = {{"raw", raw.to_json()}, {"postprocessed", post.to_json()}};
    run.finish(run_config("seg-predict", {{"model", a.model}, {"manifest", a.manifest}, {"split", a.split}, {"out", a.out}},
                          config),
               report);
    out << "predicted " << idx.size() << " masks (" << empty.size() << " empty)\n";
    return 0;
}

// --- classification ---------------------------------------------------------------

struct ClfArgs {
    Common common;
    std::string manifest, out, masks, image_dir, model, split = "test", target = "predicted", ids;
};

json fold_aggregations(const std::vector<EvaluationReport>& folds) {
    // Mean of the fold macro-F1s, and macro-F1 of the fold-averaged class F1s.
    double mean_macro = 0.0;
    std::vector<double> class_f1(folds.front().classes.size(), 0.0);
    for (const auto& f : folds) {
        mean_macro += f.macro_f1;
        for (std::size_t c = 0; c < class_f1.size(); ++c) class_f1[c] += f.per_class[c].f1;
    }
    mean_macro /= static_cast<double>(folds.size());
    json per_class = json::object();
    double macro_of_means = 0.0;
    for (std::size_t c = 0; c < class_f1.size(); ++c) {
        class_f1[c] /= static_cast<double>(folds.size());
        per_class[folds.front().classes[c]] = class_f1[c];
        macro_of_means += class_f1[c];
    }
    macro_of_means /= static_cast<double>(class_f1.size());
    return {{"mean_of_fold_macro_f1", mean_macro},
            {"fold_mean_class_f1", per_class},
            {"macro_of_fold_mean_class_f1", macro_of_means}};
}

int cmd_clf_train(const ClfArgs& a, std::ostream& out) {
    const ExperimentConfig config = experiment_config(a.common);
    const Manifest raw = read_manifest(a.manifest);
    const DataPaths paths = data_paths(a.image_dir, a.masks);
    RunDir run(a.out);
    json report;
    if (config.mode == ExperimentMode::covid_generalization_2fold) {
        const Task task = make_task(raw, config.mode);
        const auto folds = make_generalization_folds(raw, derive_seed(config.seed, "folds"));
        std::array<VariantData, 2> data;
        for (std::size_t f = 0; f < 2; ++f) {
            std::vector<std::size_t> idx = folds[f].negatives;
            idx.insert(idx.end(), folds[f].positives.begin(), folds[f].positives.end());
            std::sort(idx.begin(), idx.end());
            data[f] = build_variant_data(raw, idx, task, config.segmented, paths, config);
        }
        json runs = json::array();
        std::vector<EvaluationReport> evaluations;
        for (std::size_t f = 0; f < 2; ++f) {
            const ClfTrainResult trained = train_classifier(data[f], VariantData{}, task.classes.size(), config);
            save_classifier(run.path("checkpoints/fold" + std::to_string(f + 1) + ".ckpt"), trained.model, task.classes,
                            config);
            const VariantEvaluation e =
                evaluate_classifier(trained.model, data[1 - f], task.classes, config.evaluation.exclude_from_macro);
            evaluations.push_back(e.report);
            runs.push_back({{"train_fold", f + 1},
                            {"test_fold", 2 - f},
                            {"n_train", data[f].inputs.size()},
                            {"n_test", data[1 - f].inputs.size()},
                            {"skipped", data[f].skipped},
                            {"history", trained.history},
                            {"evaluation", to_json(e.report)}});
        }
        report = {{"mode", to_string(config.mode)}, {"classes", task.classes}, {"folds", runs},
                  {"aggregate", fold_aggregations(evaluations)}};
    } else {
        std::vector<std::string> warnings;
        const Manifest m = ensure_split(raw, config.schedule.split, &warnings);
        const Task task = make_task(m, config.mode);
        if (task.classes.size() < 2) throw ValidationError("the manifest holds fewer than two classes for this mode");
        const VariantData train = build_variant_data(m, records_in(m, Split::train), task, config.segmented, paths, config);
        const VariantData val = build_variant_data(m, records_in(m, Split::val), task, config.segmented, paths, config);
        const ClfTrainResult trained = train_classifier(train, val, task.classes.size(), config);
        save_classifier(run.path("checkpoints/classifier.ckpt"), trained.model, task.classes, config);
        json skipped = train.skipped;
        for (const auto& s : val.skipped) skipped.push_back(s);
        report = {{"mode", to_string(config.mode)},
                  {"classes", task.classes},
                  {"segmented", config.segmented},
                  {"n_train", train.inputs.size()},
                  {"n_val", val.inputs.size()},
                  {"skipped", skipped},
                  {"history", trained.history},
                  {"warnings", warnings}};
        if (!val.inputs.empty()) {
            report["validation"] =
                to_json(evaluate_classifier(trained.model, val, task.classes, config.evaluation.exclude_from_macro).report);
        }
    }
    run.finish(run_config("clf-train", {{"manifest", a.manifest}, {"masks", a.masks}, {"image_dir", a.image_dir}, {"out", a.out}},
                          config),
               report);
    out << "trained " << to_string(config.mode) << " classifier into " << a.out << "/checkpoints\n";
    return 0;
}

// Loads the classifier and the records it applies to; the checkpoint decides mode and segmentation.
struct ClfContext {
    ExperimentConfig config;
    LoadedClassifier clf;
    Manifest manifest;
    Task task;
    VariantData data;
};

ClfContext clf_context(const ClfArgs& a) {
    ClfContext ctx;
    ctx.config = experiment_config(a.common);
    if (!fs::exists(a.model)) throw ValidationError("model not found: " + a.model);
    ctx.clf = load_classifier(a.model);
    const Checkpoint meta_only = load_checkpoint(a.model);
    ctx.config.mode = parse_experiment_mode(meta_only.metadata.at("mode").get<std::string>());
    ctx.config.segmented = ctx.clf.segmented;
    ctx.config.model.image_size = ctx.clf.image_size;
    ctx.config.model.classifier.input_size = meta_only.metadata.at("input_size").get<std::size_t>();
    ctx.manifest = read_manifest(a.manifest);
    ctx.task = make_task(ctx.manifest, ctx.config.mode);
    if (ctx.task.classes != ctx.clf.classes) {
        throw ValidationError("the manifest's classes do not match the model's classes");
    }
    auto idx = select_records(ctx.manifest, a.split, derive_seed(ctx.config.seed, "folds"));
    if (!a.ids.empty()) {
        std::set<std::string> wanted;
        std::stringstream s(a.ids);
        for (std::string id; std::getline(s, id, ',');) wanted.insert(id);
        std::erase_if(idx, [&](std::size_t i) { return !wanted.count(ctx.manifest.records[i].id); });
    }
    ctx.data = build_variant_data(ctx.manifest, idx, ctx.task, ctx.config.segmented, data_paths(a.image_dir, a.masks),
                                  ctx.config);
    return ctx;
}

int cmd_clf_eval(const ClfArgs& a, std::ostream& out) {
    ClfContext ctx = clf_context(a);
    if (ctx.data.inputs.empty()) throw ValidationError("the " + a.split + " split has no images to evaluate");
    const VariantEvaluation e =
        evaluate_classifier(ctx.clf.model, ctx.data, ctx.task.classes, ctx.config.evaluation.exclude_from_macro);
    json roc = json::object();
    for (std::size_t c = 0; c < ctx.task.classes.size(); ++c) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (std::size_t i = 0; i < e.probabilities.size(); ++i) {
            scores.push_back(e.probabilities[i][c]);
            labels.push_back(ctx.data.labels[i] == c ? 1 : 0);
        }
        const bool both = std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0;
        roc[ctx.task.classes[c]] = both ? json(roc_auc(scores, labels).auc) : json(nullptr);
    }
    json predictions = json::array();
    for (std::size_t i = 0; i < ctx.data.inputs.size(); ++i) {
        predictions.push_back({{"id", ctx.manifest.records[ctx.data.records[i]].id},
                               {"truth", ctx.task.classes[ctx.data.labels[i]]},
                               {"predicted", ctx.task.classes[e.predictions[i]]},
                               {"probabilities", e.probabilities[i]}});
    }
    RunDir run(a.out);
    const std::string table = to_text(e.report);
    run.write("report.txt", table);
    const json report = {{"split", a.split},
                         {"evaluation", to_json(e.report)},
                         {"roc_auc", roc},
                         {"skipped", ctx.data.skipped},
                         {"predictions", predictions}};
    run.finish(run_config("clf-eval", {{"model", a.model}, {"manifest", a.manifest}, {"split", a.split}, {"out", a.out}},
                          ctx.config),
               report);
    out << table;
    return 0;
}

int cmd_explain(const ClfArgs& a, std::ostream& out) {
    ClfContext ctx = clf_context(a);
    if (ctx.data.inputs.empty()) throw ValidationError("no images to explain");
    RunDir run(a.out);
    json items = json::array();
    for (std::size_t i = 0; i < ctx.data.inputs.size(); ++i) {
        const std::string& id = ctx.manifest.records[ctx.data.records[i]].id;
        std::size_t target = ctx.data.labels[i];
        if (a.target == "predicted") target = argmax(predict_proba(ctx.clf.model, ctx.data.inputs[i].input));
        const ExplainedSample s = explain_sample(ctx.clf.model, ctx.data.inputs[i], id, target, ctx.config);
        json detail;
        if (s.lime) {
            Explanation e = *s.lime;
            e.class_name = ctx.task.classes[target];
            detail = to_json(e);
        } else {
            detail = {{"image_id", id}, {"class", ctx.task.classes[target]}, {"method", "gradcam"},
                      {"threshold", ctx.config.model.cam_threshold}};
        }
        run.write_json("explanations/" + id + ".json", detail);
        run.write("masks/" + id + ".pgm", encode_mask(s.mask));
        run.write("heatmaps/" + id + ".pfm", encode_pfm(s.lime ? mask_as_image(s.mask) : s.cam));
        items.push_back({{"id", id},
                         {"class", ctx.task.classes[target]},
                         {"truth", ctx.task.classes[ctx.data.labels[i]]},
                         {"mask", "masks/" + id + ".pgm"},
                         {"area", mask_area(s.mask)}});
    }
    const json report = {{"method", method_name(ctx.config.model.explain)},
                         {"model_id", fs::path(a.model).stem().string()},
                         {"classes", ctx.task.classes},
                         {"target", a.target},
                         {"items", items},
                         {"skipped", ctx.data.skipped}};
    run.finish(run_config("explain", {{"model", a.model}, {"manifest", a.manifest}, {"split", a.split}, {"out", a.out}},
                          ctx.config),
               report);
    out << "explained " << items.size() << " images with " << method_name(ctx.config.model.explain) << "\n";
    return 0;
}

// --- heatmaps -----------------------------------------------------------------------

struct HeatmapArgs {
    Common common;
    std::string explanations, out, model_id;
    bool glyph_strip = false;
};

void write_heatmap(const RunDir& run, const std::string& stem, const AggregateHeatmap& h) {
    std::string bytes;
    Image as_float(h.map.height, h.map.width);
    for (std::size_t i = 0; i < h.map.size(); ++i) as_float.data[i] = static_cast<float>(h.map.data[i]);
    run.write("heatmaps/" + stem + ".pfm", encode_pfm(as_float));
    run.write_json("heatmaps/" + stem + ".json", to_json(h.meta));
}

int cmd_heatmap(const HeatmapArgs& a, std::ostream& out) {
    const fs::path dir = a.explanations;
    if (!fs::exists(dir / "report.json")) throw ValidationError("no explain report in " + dir.string());
    const json source = json::parse(read_file(dir / "report.json"));
    const std::string method = source.at("method").get<std::string>();
    const std::string model_id = a.model_id.empty() ? source.at("model_id").get<std::string>() : a.model_id;
    std::map<std::string, std::vector<BinaryMask>> by_class;
    std::vector<BinaryMask> all;
    for (const auto& item : source.at("items")) {
        BinaryMask mask = load_mask(dir / item.at("mask").get<std::string>());
        if (!all.empty() && !mask.same_size(all.front())) mask = resize_nearest(mask, all.front().height, all.front().width);
        by_class[item.at("class").get<std::string>()].push_back(mask);
        all.push_back(std::move(mask));
    }
    if (all.empty()) throw ValidationError("the explain run holds no items");
    RunDir run(a.out);
    json maps = json::array();
    auto emit = [&](const std::string& name, const std::vector<BinaryMask>& masks) {
        const AggregateHeatmap h = aggregate(masks, HeatmapMeta{model_id, name, method, 0});
        write_heatmap(run, name, h);
        json j = to_json(h.meta);
        if (a.glyph_strip) {
            if (h.map.height != h.map.width) throw ValidationError("--glyph-strip needs square heatmaps");
            j["glyph_strip_mass"] = region_mass(h.map, glyph_region(h.map.height));
        }
        maps.push_back(j);
    };
    for (const auto& [name, masks] : by_class) emit(name, masks);
    emit("all", all);
    run.finish(run_config("heatmap", {{"explanations", a.explanations}, {"out", a.out}}, config_document(a.common)),
               {{"heatmaps", maps}});
    out << "aggregated " << all.size() << " explanations into " << maps.size() << " heatmaps\n";
    return 0;
}

// --- comparison ---------------------------------------------------------------------

struct CompareArgs {
    Common common;
    std::string manifest, out, masks, image_dir, clean_image_dir;
    bool glyph_strip = false, no_explain = false;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
    const ExperimentConfig config = experiment_config(a.common);
    const Manifest m = read_manifest(a.manifest);
    ComparisonOptions options;
    options.paths = data_paths(a.image_dir, a.masks);
    options.clean_image_dir = a.clean_image_dir;
    options.explain = !a.no_explain;
    if (a.glyph_strip) {
        const Image first = load_sample_image(m, m.records.at(0), options.paths, config.model.image_size);
        if (first.height != first.width) throw ValidationError("--glyph-strip needs square images");
        options.strip_region = glyph_region(first.height);
    }
    const ComparisonResult result = run_pipeline_comparison(m, config, options);
    RunDir run(a.out);
    for (const auto& v : result.variants) {
        ExperimentConfig variant = config;
        variant.segmented = v.segmented;
        save_classifier(run.path("checkpoints/" + v.name + ".ckpt"), v.trained.model, result.classes, variant);
        for (const auto& [name, h] : v.heatmaps) write_heatmap(run, v.name + "_" + name, h);
    }
    const json report = to_json(result);
    run.finish(run_config("compare", {{"manifest", a.manifest}, {"out", a.out}}, config), report);
    for (const auto& v : report.at("variants")) {
        out << v.at("name").get<std::string>() << ": macro-F1 " << v.at("macro_f1").dump() << ", accuracy "
            << v.at("accuracy").dump() << "\n";
    }
    out << "Wilcoxon p = " << result.wilcoxon.p_value << "\n";
    return 0;
}

// --- stats and serve --------------------------------------------------------------------

struct StatsArgs {
    Common common;
    std::string manifest, store, export_dir, out;
};

int cmd_stats(const StatsArgs& a, std::ostream& out) {
    if (a.manifest.empty() == a.store.empty()) throw ValidationError("give exactly one of --manifest and --store");
    if (!a.export_dir.empty() && a.store.empty()) throw ValidationError("--export-corrections needs --store");
    json report;
    if (!a.manifest.empty()) {
        const Manifest m = read_manifest(a.manifest);
        const auto idx = all_indices(m);
        std::set<std::string> patients;
        for (const auto& r : m.records) patients.insert(r.patient_id);
        report = {{"n", m.records.size()},
                  {"patients", patients.size()},
                  {"classes", counts_by(m, idx, &SampleRecord::class_label)},
                  {"sources", counts_by(m, idx, &SampleRecord::source)},
                  {"projections", counts_by(m, idx, &SampleRecord::projection)}};
        if (m.has_split()) {
            json splits = json::object();
            for (const Split s : {Split::train, Split::val, Split::test}) {
                splits[std::string(to_string(s))] = records_in(m, s).size();
            }
            report["splits"] = splits;
        }
    } else {
        if (!ReviewStore::exists(a.store)) throw ValidationError("no review store in " + a.store);
        const ReviewStore store(a.store);
        json status = json::object();
        for (const ReviewStatus s : {ReviewStatus::pending, ReviewStatus::accepted, ReviewStatus::edited, ReviewStatus::rejected}) {
            status[std::string(to_string(s))] = store.list(s).size();
        }
        report = {{"n", store.list().size()}, {"status", status}};
        if (!a.export_dir.empty()) report["exported"] = store.export_corrections(a.export_dir);
    }
    if (!a.out.empty()) {
        RunDir run(a.out);
        run.finish(run_config("stats", {{"manifest", a.manifest}, {"store", a.store}, {"export", a.export_dir}},
                              config_document(a.common)),
                   report);
    }
    out << report.dump(2) << "\n";
    return 0;
}

struct ServeArgs {
    Common common;
    std::string store, init_from, host = "127.0.0.1";
    int port = 8080;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
    if (!a.init_from.empty()) {
        if (ReviewStore::exists(a.store)) throw ValidationError("a review store already exists in " + a.store);
        ReviewStore::initialize_from_predictions(a.store, a.init_from);
    }
    ReviewServer server(a.store);
    out << "serving " << a.store << " on http://" << a.host << ":" << a.port << "\n" << std::flush;
    server.run(a.host, a.port);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Segmentation-first chest X-ray classification and explanation pipeline", "sgxp"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic two-ellipse corpus");
    synth.app = s;
    add_common(s, synth.common);
    s->add_option("--out", synth.out, "Corpus directory")->required();
    s->add_option("--n", synth.n, "Number of images");
    s->add_option("--size", synth.size, "Image side in pixels");
    s->add_flag("--bias", synth.bias, "Stamp class-correlated corner glyphs");
    s->add_flag("--source-texture", synth.source_texture, "Striped background for one source");
    s->add_option("--glyph-mode", synth.glyph_mode, "Glyph corner follows the class or the source")
        ->check(CLI::IsMember({"class", "source"}));
    s->add_option("--glyph-correlation", synth.glyph_correlation, "P(glyph in its class corner)");
    s->add_option("--source-correlation", synth.source_correlation, "P(source follows class)");
    s->add_option("--lesion-contrast", synth.lesion_contrast, "Peak opacity intensity");

    SplitArgs split;
    auto* sp = app.add_subcommand("split", "Patient-grouped, stratified train/val/test split");
    add_common(sp, split.common);
    sp->add_option("--manifest", split.manifest)->required();
    sp->add_option("--out", split.out)->required();

    SegTrainArgs seg_train;
    auto* st = app.add_subcommand("seg-train", "Train the U-Net lung segmenter");
    add_common(st, seg_train.common);
    st->add_option("--manifest", seg_train.manifest)->required();
    st->add_option("--out", seg_train.out)->required();
    st->add_option("--masks", seg_train.masks, "Directory of <id>.pgm masks");
    st->add_option("--image-dir", seg_train.image_dir, "Directory of <id>.pgm images");
    st->add_option("--corrections", seg_train.corrections, "Exported review corrections")->check(CLI::ExistingDirectory);

    SegPredictArgs seg_predict;
    auto* sq = app.add_subcommand("seg-predict", "Predict and post-process lung masks");
    add_common(sq, seg_predict.common);
    sq->add_option("--model", seg_predict.model)->required();
    sq->add_option("--manifest", seg_predict.manifest)->required();
    sq->add_option("--out", seg_predict.out)->required();
    sq->add_option("--split", seg_predict.split)->check(kSelection);
    sq->add_option("--image-dir", seg_predict.image_dir);
    sq->add_option("--truth", seg_predict.truth, "Directory of reference masks for scoring");

    ClfArgs clf_train, clf_eval, explain;
    auto* ct = app.add_subcommand("clf-train", "Train the classifier for the configured mode");
    add_common(ct, clf_train.common);
    ct->add_option("--manifest", clf_train.manifest)->required();
    ct->add_option("--out", clf_train.out)->required();
    ct->add_option("--masks", clf_train.masks, "Directory of <id>.pgm lung masks");
    ct->add_option("--image-dir", clf_train.image_dir);

    for (auto [sub, target, what] : {std::tuple{app.add_subcommand("clf-eval", "Evaluate a classifier"), &clf_eval, "evaluate"},
                                     std::tuple{app.add_subcommand("explain", "Explain classifier decisions"), &explain,
                                                "explain"}}) {
        add_common(sub, target->common);
        sub->add_option("--model", target->model)->required();
        sub->add_option("--manifest", target->manifest)->required();
        sub->add_option("--out", target->out)->required();
        sub->add_option("--masks", target->masks);
        sub->add_option("--image-dir", target->image_dir);
        sub->add_option("--split", target->split, std::string("Records to ") + what)->check(kSelection);
        sub->add_option("--ids", target->ids, "Comma-separated ids");
    }
    app.get_subcommand("explain")
        ->add_option("--target", explain.target, "Explained class")
        ->check(CLI::IsMember({"predicted", "truth"}));

    HeatmapArgs heatmap;
    auto* hm = app.add_subcommand("heatmap", "Aggregate explanation masks per class");
    add_common(hm, heatmap.common);
    hm->add_option("--explanations", heatmap.explanations, "Output directory of `explain`")->required();
    hm->add_option("--out", heatmap.out)->required();
    hm->add_option("--model-id", heatmap.model_id);
    hm->add_flag("--glyph-strip", heatmap.glyph_strip, "Report the mass in the synthetic glyph strips");

    CompareArgs compare;
    auto* cp = app.add_subcommand("compare", "Segmented versus full-image pipelines");
    add_common(cp, compare.common);
    cp->add_option("--manifest", compare.manifest)->required();
    cp->add_option("--out", compare.out)->required();
    cp->add_option("--masks", compare.masks);
    cp->add_option("--image-dir", compare.image_dir);
    cp->add_option("--clean-image-dir", compare.clean_image_dir, "Glyph-free copies for a second test pass");
    cp->add_flag("--glyph-strip", compare.glyph_strip, "Report the heatmap mass in the synthetic glyph strips");
    cp->add_flag("--no-explain", compare.no_explain, "Skip explanations and heatmaps");

    StatsArgs stats;
    auto* sa = app.add_subcommand("stats", "Manifest or review store statistics");
    add_common(sa, stats.common);
    sa->add_option("--manifest", stats.manifest);
    sa->add_option("--store", stats.store);
    sa->add_option("--export-corrections", stats.export_dir, "Write edited masks for the next seg-train");
    sa->add_option("--out", stats.out);

    ServeArgs serve;
    auto* sv = app.add_subcommand("serve", "Mask review HTTP service");
    add_common(sv, serve.common);
    sv->add_option("--store", serve.store)->required();
    sv->add_option("--init-from", serve.init_from, "seg-predict output to seed the store from");
    sv->add_option("--host", serve.host);
    sv->add_option("--port", serve.port);

    std::vector<std::string> argv_storage{"sgxp"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_storage) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (s->parsed()) return cmd_synth(synth, out);
        if (sp->parsed()) return cmd_split(split, out);
        if (st->parsed()) return cmd_seg_train(seg_train, out);
        if (sq->parsed()) return cmd_seg_predict(seg_predict, out);
        if (ct->parsed()) return cmd_clf_train(clf_train, out);
        if (app.get_subcommand("clf-eval")->parsed()) return cmd_clf_eval(clf_eval, out);
        if (app.get_subcommand("explain")->parsed()) return cmd_explain(explain, out);
        if (hm->parsed()) return cmd_heatmap(heatmap, out);
        if (cp->parsed()) return cmd_compare(compare, out);
        if (sa->parsed()) return cmd_stats(stats, out);
        if (sv->parsed()) return cmd_serve(serve, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const ArgumentError& e) {
        err << "invalid input: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        err << "parse error (line " << e.line() << "): " << e.what() << "\n";
        return 1;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const json::exception& e) {
        err << "invalid JSON input: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return 2;
    }
    err << "no subcommand\n";
    return 1;
}

}  // namespace sgxp
