#include "sgxp/seg/train.hpp"

#include <cmath>
#include <limits>

#include "sgxp/core/loss.hpp"

namespace sgxp {
namespace {

std::vector<PairedSample> fit_to_model(const std::vector<PairedSample>& samples, const Shape& in,
                                       const char* which) {
    std::vector<PairedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        if (!s.mask) throw ArgumentError(std::string(which) + " sample has no mask");
        if (!s.mask->same_size(s.image)) throw ArgumentError(std::string(which) + " mask size differs from image");
        out.push_back({resize_bilinear(s.image, in[1], in[2]), resize_nearest(*s.mask, in[1], in[2])});
    }
    return out;
}

}  // namespace

void SegTrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be positive");
}

void to_json(nlohmann::json& j, const SegTrainConfig& c) {
    j = {{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"initial_lr", c.initial_lr},
         {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
         {"plateau_patience", c.plateau.patience},
         {"plateau_factor", c.plateau.factor},
         {"min_lr", c.plateau.min_lr},
         {"seed", c.seed},
         {"keep_best", c.keep_best}};
}

void from_json(const nlohmann::json& j, SegTrainConfig& c) {
    SegTrainConfig d = c;
    if (j.contains("epochs")) d.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("batch_size")) d.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("initial_lr")) d.initial_lr = j.at("initial_lr").get<double>();
    if (j.contains("optimizer")) {
        const auto o = j.at("optimizer").get<std::string>();
        if (o != "adam" && o != "sgd") throw ConfigError("unknown optimizer '" + o + "'");
        d.optimizer = o == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
    }
    if (j.contains("plateau_patience")) d.plateau.patience = j.at("plateau_patience").get<int>();
    if (j.contains("plateau_factor")) d.plateau.factor = j.at("plateau_factor").get<double>();
    if (j.contains("min_lr")) d.plateau.min_lr = j.at("min_lr").get<double>();
    if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("keep_best")) d.keep_best = j.at("keep_best").get<bool>();
    d.validate();
    c = d;
}

double segmentation_loss(const Network<float>& model, const std::vector<PairedSample>& samples,
                         std::size_t batch_size) {
    if (samples.empty()) throw ArgumentError("no samples to evaluate");
    const auto fitted = fit_to_model(samples, model.input_shape(), "evaluation");
    double total = 0.0;
    for (std::size_t start = 0; start < fitted.size(); start += batch_size) {
        const std::size_t end = std::min(fitted.size(), start + batch_size);
        std::vector<Image> images;
        std::vector<BinaryMask> masks;
        for (std::size_t i = start; i < end; ++i) {
            images.push_back(fitted[i].image);
            masks.push_back(*fitted[i].mask);
        }
        const auto l = soft_jaccard_loss(model.predict(to_tensor(images)), to_tensor(masks));
        total += l.value * static_cast<double>(end - start);
    }
    return total / static_cast<double>(fitted.size());
}

SegTrainResult train_segmenter(Network<float> model, const std::vector<PairedSample>& train,
                               const std::vector<PairedSample>& val, const SegTrainConfig& config,
                               const AugmentationConfig& augmentation) {
    config.validate();
    augmentation.validate();
    if (train.empty()) throw ArgumentError("segmentation training set is empty");
    const auto data = fit_to_model(train, model.input_shape(), "training");
    const auto held_out = fit_to_model(val, model.input_shape(), "validation");

    SegTrainResult result;
    Optimizer<float> optimizer({config.optimizer, config.initial_lr});
    PlateauSchedule schedule(config.initial_lr, config.plateau);
    double best = std::numeric_limits<double>::infinity();
    WeightSnapshot<float> best_weights = WeightSnapshot<float>::take(model);
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = schedule.learning_rate();
        optimizer.set_learning_rate(lr);
        const auto order = shuffled_indices(data.size(), derive_seed(config.seed, "shuffle", epoch));
        double train_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<Image> images;
            std::vector<BinaryMask> masks;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                Rng rng(derive_seed(config.seed, "augment", epoch * data.size() + i));
                auto s = augment(data[i], augmentation, rng);
                images.push_back(std::move(s.image));
                masks.push_back(std::move(*s.mask));
            }
            auto fwd = model.forward(to_tensor(images), Mode::train, derive_seed(config.seed, "dropout", step++));
            const auto loss = soft_jaccard_loss(fwd.output, to_tensor(masks));
            if (!std::isfinite(loss.value)) throw TrainingError("segmentation loss is not finite");
            const auto grads = model.backward(fwd.tape, loss.gradient);
            optimizer.step(model.parameters(), grads.params);
            train_loss += loss.value * static_cast<double>(end - start);
        }
        train_loss /= static_cast<double>(data.size());
        const double val_loss = held_out.empty() ? train_loss : segmentation_loss(model, held_out, config.batch_size);
        result.history.push_back({"segmentation", epoch + 1, train_loss, val_loss, lr});
        if (val_loss < best) {
            best = val_loss;
            result.best_epoch = epoch + 1;
            if (config.keep_best) best_weights = WeightSnapshot<float>::take(model);
        }
        schedule.update(val_loss);
    }
    if (config.keep_best && config.epochs > 0) best_weights.restore(model);
    result.model = std::move(model);
    return result;
}

}  // namespace sgxp
