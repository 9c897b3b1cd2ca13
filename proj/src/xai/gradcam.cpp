#include "sgxp/xai/gradcam.hpp"

#include <algorithm>

#include "sgxp/core/errors.hpp"

namespace sgxp {

template <typename T>
CamParts<T> gradcam_parts(const Network<T>& model, const BasicTensor<T>& image, std::size_t target_class) {
    CamParts<T> parts;
    parts.feature_node = model.feature_node();
    if (parts.feature_node < 0) throw IntegrationError("Grad-CAM needs a network with a convolutional layer");
    if (image.rank() != model.input_shape().size() || image.shape() != model.input_shape()) {
        throw ArgumentError("Grad-CAM input " + to_string(image.shape()) + " does not match the model input " +
                            to_string(model.input_shape()));
    }
    const auto& nodes = model.nodes();
    parts.score_node = static_cast<int>(nodes.size()) - 1;
    if (const auto* act = std::get_if<Activation>(&nodes.back().layer);
        act && act->kind == ActivationKind::softmax && nodes.back().inputs.front() != kNetworkInput) {
        parts.score_node = nodes.back().inputs.front();
    }
    const Shape& score_shape = model.node_shape(parts.score_node);
    if (score_shape.size() != 1) throw IntegrationError("Grad-CAM needs a vector-valued class score");
    if (target_class >= score_shape[0]) {
        throw ArgumentError("class " + std::to_string(target_class) + " outside the model's " +
                            std::to_string(score_shape[0]) + " outputs");
    }
    Shape batched{1};
    batched.insert(batched.end(), image.shape().begin(), image.shape().end());
    auto fwd = model.trace(image.reshaped(batched));
    BasicTensor<T> seed({1, score_shape[0]}, T(0));
    seed[target_class] = T(1);
    BackwardOptions options;
    options.seed_node = parts.score_node;
    options.node_gradients = true;
    auto grads = model.backward(fwd.tape, seed, options);
    const auto f = static_cast<std::size_t>(parts.feature_node);
    const Shape& fs = model.node_shape(parts.feature_node);
    if (fs.size() != 3) throw IntegrationError("Grad-CAM feature node must produce (C, H, W) maps");
    parts.activations = fwd.tape.outputs[f].reshaped(fs);
    parts.gradients = grads.nodes[f].reshaped(fs);
    return parts;
}

template CamParts<float> gradcam_parts(const Network<float>&, const Tensor&, std::size_t);
template CamParts<double> gradcam_parts(const Network<double>&, const Tensor64&, std::size_t);

Image gradcam(const Network<float>& model, const Image& image, std::size_t target_class) {
    const Shape& in = model.input_shape();
    if (in.size() != 3 || in[0] != 1 || !image.same_size(in[1], in[2])) {
        throw ArgumentError("Grad-CAM image size does not match the model input");
    }
    const auto parts = gradcam_parts(model, to_tensor(image).reshaped(in), target_class);
    const Shape& s = parts.activations.shape();
    const std::size_t channels = s[0], plane = s[1] * s[2];
    std::vector<double> cam(plane, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        double alpha = 0.0;
        for (std::size_t i = 0; i < plane; ++i) alpha += parts.gradients[c * plane + i];
        alpha /= static_cast<double>(plane);
        for (std::size_t i = 0; i < plane; ++i) cam[i] += alpha * parts.activations[c * plane + i];
    }
    Image small(s[1], s[2]);
    for (std::size_t i = 0; i < plane; ++i) small.data[i] = static_cast<float>(std::max(0.0, cam[i]));
    Image out = resize_bilinear(small, image.height, image.width);
    const float peak = *std::max_element(out.data.begin(), out.data.end());
    if (peak > 0.0f) {
        for (auto& v : out.data) v /= peak;
    }
    return out;
}

BinaryMask cam_to_mask(const Image& cam, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("CAM threshold must lie in [0, 1]");
    BinaryMask mask(cam.height, cam.width);
    if (cam.empty()) return mask;
    const double peak = *std::max_element(cam.data.begin(), cam.data.end());
    for (std::size_t i = 0; i < cam.size(); ++i) {
        const double v = cam.data[i];
        mask.data[i] = threshold == 0.0 || (v > 0.0 && v >= threshold * peak) ? 1 : 0;
    }
    return mask;
}

BinaryMask explanation_to_mask(const Explanation& explanation, const SuperpixelMap& segments) {
    std::vector<bool> selected(static_cast<std::size_t>(segments.count), false);
    for (const auto& s : explanation.superpixels) {
        if (s.id < 0 || s.id >= segments.count) {
            throw ArgumentError("superpixel " + std::to_string(s.id) + " does not exist in the map");
        }
        selected[static_cast<std::size_t>(s.id)] = true;
    }
    BinaryMask mask(segments.height, segments.width);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.data[i] = selected[static_cast<std::size_t>(segments.labels[i])];
    return mask;
}

nlohmann::json to_json(const HeatmapMeta& m) {
    return {{"model_id", m.model_id}, {"class", m.class_name}, {"method", m.method}, {"n_images", m.n_images}};
}

AggregateHeatmap aggregate(const std::vector<Image>& maps, HeatmapMeta meta) {
    if (maps.empty()) throw ArgumentError("cannot aggregate an empty list of maps");
    const std::size_t h = maps.front().height, w = maps.front().width;
    std::vector<double> sum(h * w, 0.0);
    for (const auto& m : maps) {
        if (!m.same_size(h, w)) throw ArgumentError("aggregated maps differ in size");
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += m.data[i];
    }
    AggregateHeatmap out{Grid<double>(h, w), std::move(meta)};
    out.meta.n_images = maps.size();
    for (std::size_t i = 0; i < sum.size(); ++i) out.map.data[i] = sum[i] / static_cast<double>(maps.size());
    return out;
}

AggregateHeatmap aggregate(const std::vector<BinaryMask>& masks, HeatmapMeta meta) {
    std::vector<Image> maps;
    maps.reserve(masks.size());
    for (const auto& m : masks) {
        Image im(m.height, m.width);
        for (std::size_t i = 0; i < m.size(); ++i) im.data[i] = m.data[i] ? 1.0f : 0.0f;
        maps.push_back(std::move(im));
    }
    return aggregate(maps, std::move(meta));
}

}  // namespace sgxp
