#include "sgxp/clf/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sgxp/core/loss.hpp"
#include "sgxp/seg/mask_ops.hpp"

namespace sgxp {
namespace {

void check_inputs(const Network<float>& model, const std::vector<LabeledImage>& samples, const char* which) {
    const Shape& in = model.input_shape();
    const std::size_t k = model.output_shape().at(0);
    for (const auto& s : samples) {
        if (!s.image.same_size(in[1], in[2])) {
            throw ArgumentError(std::string(which) + " image is " + std::to_string(s.image.height) + "x" +
                                std::to_string(s.image.width) + ", model expects " + std::to_string(in[1]) + "x" +
                                std::to_string(in[2]));
        }
        if (s.label >= k) throw ArgumentError(std::string(which) + " label " + std::to_string(s.label) + " out of range");
    }
}

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t k) {
    Tensor t({labels.size(), k}, 0.0f);
    for (std::size_t i = 0; i < labels.size(); ++i) t[i * k + labels[i]] = 1.0f;
    return t;
}

}  // namespace

void ClassifierConfig::validate() const {
    if (block_channels.empty()) throw ConfigError("classifier needs at least one convolutional block");
    if (std::any_of(block_channels.begin(), block_channels.end(), [](auto c) { return c == 0; }) ||
        std::any_of(head_units.begin(), head_units.end(), [](auto u) { return u == 0; })) {
        throw ConfigError("classifier layer widths must be positive");
    }
    const std::size_t div = std::size_t{1} << block_channels.size();
    if (input_size == 0 || input_size % div != 0) {
        throw ConfigError("classifier input_size " + std::to_string(input_size) + " is not divisible by " +
                          std::to_string(div));
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const ClassifierConfig& c) {
    j = {{"input_size", c.input_size},
         {"block_channels", c.block_channels},
         {"head_units", c.head_units},
         {"dropout_rate", c.dropout_rate}};
}

void from_json(const nlohmann::json& j, ClassifierConfig& c) {
    ClassifierConfig d = c;
    if (j.contains("input_size")) d.input_size = j.at("input_size").get<std::size_t>();
    if (j.contains("block_channels")) d.block_channels = j.at("block_channels").get<std::vector<std::size_t>>();
    if (j.contains("head_units")) d.head_units = j.at("head_units").get<std::vector<std::size_t>>();
    if (j.contains("dropout_rate")) d.dropout_rate = j.at("dropout_rate").get<double>();
    d.validate();
    c = d;
}

Network<float> build_classifier(const ClassifierConfig& config, std::size_t n_classes) {
    config.validate();
    if (n_classes < 2) throw ConfigError("a classifier needs at least 2 classes, got " + std::to_string(n_classes));
    Network<float> net({1, config.input_size, config.input_size});
    std::size_t in_ch = 1;
    for (std::size_t b = 0; b < config.block_channels.size(); ++b) {
        const std::string p = "block" + std::to_string(b);
        const std::size_t ch = config.block_channels[b];
        net.add(p + "_conv", Conv2D{in_ch, ch, 3, 1, 1}, true);
        net.add(p + "_bn", BatchNorm{ch}, true);
        net.add(p + "_relu", Activation{ActivationKind::relu});
        net.add(p + "_pool", MaxPool2D{2});
        in_ch = ch;
    }
    const std::size_t side = config.input_size >> config.block_channels.size();
    std::size_t width = in_ch * side * side;
    net.add("flatten", Flatten{});
    for (std::size_t i = 0; i < config.head_units.size(); ++i) {
        const std::string p = "fc" + std::to_string(i);
        net.add(p + "_dense", Dense{width, config.head_units[i]});
        net.add(p + "_relu", Activation{ActivationKind::relu});
        if (config.dropout_rate > 0.0) net.add(p + "_drop", Dropout{config.dropout_rate});
        net.add(p + "_bn", BatchNorm{config.head_units[i]});
        width = config.head_units[i];
    }
    net.add("logits", Dense{width, n_classes});
    net.add("softmax", Activation{ActivationKind::softmax});
    return net;
}

void TrainSchedule::validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(warmup_lr > 0.0) || !(finetune_lr > 0.0)) throw ConfigError("learning rates must be positive");
}

void to_json(nlohmann::json& j, const TrainSchedule& s) {
    j = {{"warmup_epochs", s.warmup_epochs},
         {"warmup_lr", s.warmup_lr},
         {"finetune_epochs", s.finetune_epochs},
         {"finetune_lr", s.finetune_lr},
         {"batch_size", s.batch_size},
         {"plateau_patience", s.plateau.patience},
         {"plateau_factor", s.plateau.factor},
         {"min_lr", s.plateau.min_lr},
         {"seed", s.seed},
         {"keep_best", s.keep_best}};
}

void from_json(const nlohmann::json& j, TrainSchedule& s) {
    TrainSchedule d = s;
    if (j.contains("warmup_epochs")) d.warmup_epochs = j.at("warmup_epochs").get<std::size_t>();
    if (j.contains("warmup_lr")) d.warmup_lr = j.at("warmup_lr").get<double>();
    if (j.contains("finetune_epochs")) d.finetune_epochs = j.at("finetune_epochs").get<std::size_t>();
    if (j.contains("finetune_lr")) d.finetune_lr = j.at("finetune_lr").get<double>();
    if (j.contains("batch_size")) d.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("plateau_patience")) d.plateau.patience = j.at("plateau_patience").get<int>();
    if (j.contains("plateau_factor")) d.plateau.factor = j.at("plateau_factor").get<double>();
    if (j.contains("min_lr")) d.plateau.min_lr = j.at("min_lr").get<double>();
    if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("keep_best")) d.keep_best = j.at("keep_best").get<bool>();
    d.validate();
    s = d;
}

double classification_loss(const Network<float>& model, const std::vector<LabeledImage>& samples,
                           std::size_t batch_size) {
    if (samples.empty()) throw ArgumentError("no samples to evaluate");
    check_inputs(model, samples, "evaluation");
    const std::size_t k = model.output_shape().at(0);
    if (batch_size == 0) batch_size = 1;
    double total = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t end = std::min(samples.size(), start + batch_size);
        std::vector<Image> images;
        std::vector<std::size_t> labels;
        for (std::size_t i = start; i < end; ++i) {
            images.push_back(samples[i].image);
            labels.push_back(samples[i].label);
        }
        total += cross_entropy_loss(model.predict(to_tensor(images)), one_hot(labels, k)).value *
                 static_cast<double>(end - start);
    }
    return total / static_cast<double>(samples.size());
}

ClfTrainResult train_phase(Network<float> model, const std::vector<LabeledImage>& train,
                           const std::vector<LabeledImage>& val, const PhaseSpec& phase,
                           const TrainSchedule& schedule, const AugmentationConfig& augmentation) {
    schedule.validate();
    augmentation.validate();
    if (train.empty()) throw ArgumentError("classification training set is empty");
    check_inputs(model, train, "training");
    check_inputs(model, val, "validation");
    const std::size_t k = model.output_shape().at(0);
    const std::uint64_t seed = derive_seed(schedule.seed, phase.name);

    ClfTrainResult result;
    model.set_frozen(phase.freeze_backbone);
    Optimizer<float> optimizer({OptimizerKind::adam, phase.learning_rate});
    PlateauSchedule plateau(phase.learning_rate, schedule.plateau);
    double best = std::numeric_limits<double>::infinity();
    auto best_weights = WeightSnapshot<float>::take(model);
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < phase.epochs; ++epoch) {
        const double lr = plateau.learning_rate();
        optimizer.set_learning_rate(lr);
        const auto order = shuffled_indices(train.size(), derive_seed(seed, "shuffle", epoch));
        double train_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
            const std::size_t end = std::min(order.size(), start + schedule.batch_size);
            std::vector<Image> images;
            std::vector<std::size_t> labels;
            for (std::size_t j = start; j < end; ++j) {
                const std::size_t i = order[j];
                Rng rng(derive_seed(seed, "augment", epoch * train.size() + i));
                images.push_back(augment(PairedSample{train[i].image, std::nullopt}, augmentation, rng).image);
                labels.push_back(train[i].label);
            }
            auto fwd = model.forward(to_tensor(images), Mode::train, derive_seed(seed, "dropout", step++));
            const auto loss = cross_entropy_loss(fwd.output, one_hot(labels, k));
            if (!std::isfinite(loss.value)) throw TrainingError("classification loss is not finite");
            const auto grads = model.backward(fwd.tape, loss.gradient);
            optimizer.step(model.parameters(), grads.params);
            train_loss += loss.value * static_cast<double>(end - start);
        }
        train_loss /= static_cast<double>(train.size());
        const double val_loss = val.empty() ? train_loss : classification_loss(model, val);
        result.history.push_back({phase.name, epoch + 1, train_loss, val_loss, lr});
        if (val_loss < best) {
            best = val_loss;
            if (schedule.keep_best) best_weights = WeightSnapshot<float>::take(model);
        }
        plateau.update(val_loss);
    }
    if (schedule.keep_best && phase.epochs > 0) best_weights.restore(model);
    model.set_frozen(false);
    result.model = std::move(model);
    return result;
}

ClfTrainResult train_two_phase(Network<float> model, const std::vector<LabeledImage>& train,
                               const std::vector<LabeledImage>& val, const TrainSchedule& schedule,
                               const AugmentationConfig& augmentation) {
    schedule.validate();
    const std::size_t k = model.output_shape().at(0);
    std::vector<std::size_t> counts(k, 0);
    for (const auto& s : train) {
        if (s.label >= k) throw ArgumentError("training label " + std::to_string(s.label) + " out of range");
        ++counts[s.label];
    }
    std::string missing;
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
    }
    if (!missing.empty()) throw ArgumentError("no training images for class " + missing);

    ClfTrainResult out{std::move(model), {}};
    if (schedule.warmup_epochs > 0) {
        auto warm = train_phase(std::move(out.model), train, val,
                                {"warmup", schedule.warmup_epochs, schedule.warmup_lr, true}, schedule, augmentation);
        out.model = std::move(warm.model);
        out.history = std::move(warm.history);
    }
    auto fine = train_phase(std::move(out.model), train, val,
                            {"finetune", schedule.finetune_epochs, schedule.finetune_lr, false}, schedule, augmentation);
    out.model = std::move(fine.model);
    out.history.insert(out.history.end(), fine.history.begin(), fine.history.end());
    return out;
}

std::vector<std::vector<double>> predict_proba(const Network<float>& model, const std::vector<Image>& images,
                                               std::size_t batch_size) {
    const Shape& in = model.input_shape();
    const std::size_t k = model.output_shape().at(0);
    if (batch_size == 0) batch_size = 1;
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += batch_size) {
        const std::size_t end = std::min(images.size(), start + batch_size);
        std::vector<Image> batch;
        for (std::size_t i = start; i < end; ++i) {
            if (!images[i].same_size(in[1], in[2])) {
                throw ArgumentError("image is " + std::to_string(images[i].height) + "x" +
                                    std::to_string(images[i].width) + ", classifier expects " +
                                    std::to_string(in[1]) + "x" + std::to_string(in[2]));
            }
            batch.push_back(images[i]);
        }
        const Tensor p = model.predict(to_tensor(batch));
        for (std::size_t i = 0; i < end - start; ++i) out.emplace_back(p.data() + i * k, p.data() + (i + 1) * k);
    }
    return out;
}

std::vector<double> predict_proba(const Network<float>& model, const Image& image) {
    return predict_proba(model, std::vector<Image>{image}, 1).front();
}

std::size_t argmax(const std::vector<double>& v) {
    if (v.empty()) throw ArgumentError("argmax of an empty vector");
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

Image prepare_input(const Image& image, const BinaryMask* roi, std::size_t size) {
    if (roi) return crop_to_roi(image, *roi, size).image;
    return resize_bilinear(image, size, size);
}

}  // namespace sgxp
