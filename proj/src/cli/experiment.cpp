#include "sgxp/cli/experiment.hpp"

#include <set>

#include "sgxp/core/errors.hpp"
#include "sgxp/core/random.hpp"

namespace sgxp {
namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void update(const nlohmann::json& j, const char* key, T& target) {
    if (j.contains(key)) from_json(j.at(key), target);
}

}  // namespace

std::string_view to_string(ExperimentMode m) {
    switch (m) {
        case ExperimentMode::multiclass: return "multiclass";
        case ExperimentMode::covid_generalization_2fold: return "covid_generalization_2fold";
        case ExperimentMode::source_bias: return "source_bias";
    }
    return "multiclass";
}

ExperimentMode parse_experiment_mode(std::string_view s) {
    if (s == "multiclass") return ExperimentMode::multiclass;
    if (s == "covid_generalization_2fold") return ExperimentMode::covid_generalization_2fold;
    if (s == "source_bias") return ExperimentMode::source_bias;
    throw ConfigError("unknown mode '" + std::string(s) + "'");
}

void ExperimentConfig::validate() const {
    model.classifier.validate();
    model.unet.validate();
    model.lime.validate();
    if (!(model.cam_threshold >= 0.0 && model.cam_threshold <= 1.0)) throw ConfigError("cam_threshold must lie in [0, 1]");
    if (model.image_size != 0 && model.image_size < 8) throw ConfigError("image_size must be 0 or at least 8");
    schedule.classifier.validate();
    schedule.segmentation.validate();
    schedule.split.validate();
    augmentation.classifier.validate();
    augmentation.segmentation.validate();
}

ExperimentConfig ExperimentConfig::resolved() const {
    ExperimentConfig c = *this;
    c.schedule.split.seed = derive_seed(seed, "split");
    c.schedule.segmentation.seed = derive_seed(seed, "seg-train");
    c.schedule.classifier.seed = derive_seed(seed, "clf-train");
    return c;
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = {{"mode", to_string(c.mode)},
         {"segmented", c.segmented},
         {"seed", c.seed},
         {"model",
          {{"classifier", c.model.classifier},
           {"unet", c.model.unet},
           {"lime", c.model.lime},
           {"cam_threshold", c.model.cam_threshold},
           {"explain", c.model.explain == ExplainMethod::lime ? "lime" : "gradcam"},
           {"image_size", c.model.image_size}}},
         {"schedule",
          {{"classifier", c.schedule.classifier},
           {"segmentation", c.schedule.segmentation},
           {"split", c.schedule.split}}},
         {"augmentation", {{"classifier", c.augmentation.classifier}, {"segmentation", c.augmentation.segmentation}}},
         {"evaluation", {{"exclude_from_macro", c.evaluation.exclude_from_macro}}}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    check_keys(j, {"mode", "segmented", "model", "schedule", "augmentation", "evaluation", "seed"}, "experiment config");
    ExperimentConfig d = c;
    if (j.contains("mode")) d.mode = parse_experiment_mode(j.at("mode").get<std::string>());
    if (j.contains("segmented")) d.segmented = j.at("segmented").get<bool>();
    if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, {"classifier", "unet", "lime", "cam_threshold", "explain", "image_size"}, "model");
        update(m, "classifier", d.model.classifier);
        update(m, "unet", d.model.unet);
        update(m, "lime", d.model.lime);
        if (m.contains("cam_threshold")) d.model.cam_threshold = m.at("cam_threshold").get<double>();
        if (m.contains("image_size")) d.model.image_size = m.at("image_size").get<std::size_t>();
        if (m.contains("explain")) {
            const auto e = m.at("explain").get<std::string>();
            if (e != "lime" && e != "gradcam") throw ConfigError("explain must be lime or gradcam");
            d.model.explain = e == "lime" ? ExplainMethod::lime : ExplainMethod::gradcam;
        }
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        check_keys(s, {"classifier", "segmentation", "split"}, "schedule");
        update(s, "classifier", d.schedule.classifier);
        update(s, "segmentation", d.schedule.segmentation);
        update(s, "split", d.schedule.split);
    }
    if (j.contains("augmentation")) {
        const auto& a = j.at("augmentation");
        check_keys(a, {"classifier", "segmentation"}, "augmentation");
        update(a, "classifier", d.augmentation.classifier);
        update(a, "segmentation", d.augmentation.segmentation);
    }
    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        check_keys(e, {"exclude_from_macro"}, "evaluation");
        if (e.contains("exclude_from_macro")) {
            d.evaluation.exclude_from_macro = e.at("exclude_from_macro").get<std::vector<std::string>>();
        }
    }
    d.validate();
    c = d;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        value = text;
    }
    nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component");
        if (!node->is_object()) *node = nlohmann::json::object();
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace sgxp
