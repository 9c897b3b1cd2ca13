#include "sgxp/seg/unet.hpp"

#include <algorithm>

namespace sgxp {
namespace {

// conv-BN-ReLU-dropout-conv-BN-ReLU; returns the last node.
int add_block(Network<float>& net, const UNetConfig& c, const std::string& prefix, int input, std::size_t in_ch,
              std::size_t out_ch) {
    net.add(prefix + "_conv1", Conv2D{in_ch, out_ch, 3, 1, 1}, std::vector<int>{input});
    if (c.batchnorm) net.add(prefix + "_bn1", BatchNorm{out_ch});
    net.add(prefix + "_relu1", Activation{ActivationKind::relu});
    if (c.dropout_rate > 0.0) net.add(prefix + "_drop", Dropout{c.dropout_rate});
    net.add(prefix + "_conv2", Conv2D{out_ch, out_ch, 3, 1, 1});
    if (c.batchnorm) net.add(prefix + "_bn2", BatchNorm{out_ch});
    return net.add(prefix + "_relu2", Activation{ActivationKind::relu});
}

}  // namespace

void UNetConfig::validate() const {
    if (depth < 1) throw ConfigError("U-Net depth must be at least 1");
    if (depth > 8) throw ConfigError("U-Net depth above 8 is not supported");
    if (base_channels < 1) throw ConfigError("U-Net base_channels must be positive");
    if (input_size == 0 || input_size % (std::size_t{1} << depth) != 0) {
        throw ConfigError("input_size " + std::to_string(input_size) + " is not divisible by 2^" +
                          std::to_string(depth));
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const UNetConfig& c) {
    j = {{"input_size", c.input_size},
         {"depth", c.depth},
         {"base_channels", c.base_channels},
         {"dropout_rate", c.dropout_rate},
         {"batchnorm", c.batchnorm},
         {"upsample", c.upsample == UpsampleMode::transposed ? "transposed" : "nearest"}};
}

void from_json(const nlohmann::json& j, UNetConfig& c) {
    UNetConfig d = c;
    if (j.contains("input_size")) d.input_size = j.at("input_size").get<std::size_t>();
    if (j.contains("depth")) d.depth = j.at("depth").get<std::size_t>();
    if (j.contains("base_channels")) d.base_channels = j.at("base_channels").get<std::size_t>();
    if (j.contains("dropout_rate")) d.dropout_rate = j.at("dropout_rate").get<double>();
    if (j.contains("batchnorm")) d.batchnorm = j.at("batchnorm").get<bool>();
    if (j.contains("upsample")) {
        const auto u = j.at("upsample").get<std::string>();
        if (u == "transposed") {
            d.upsample = UpsampleMode::transposed;
        } else if (u == "nearest") {
            d.upsample = UpsampleMode::nearest;
        } else {
            throw ConfigError("unknown upsample mode '" + u + "'");
        }
    }
    c = d;
}

Network<float> build_unet(const UNetConfig& config) {
    config.validate();
    Network<float> net({1, config.input_size, config.input_size});
    std::vector<int> skips;
    std::vector<std::size_t> channels;
    int node = kNetworkInput;
    std::size_t in_ch = 1;
    for (std::size_t level = 0; level < config.depth; ++level) {
        const std::size_t ch = config.base_channels << level;
        const std::string prefix = "enc" + std::to_string(level);
        node = add_block(net, config, prefix, node, in_ch, ch);
        skips.push_back(node);
        channels.push_back(ch);
        node = net.add(prefix + "_pool", MaxPool2D{2});
        in_ch = ch;
    }
    const std::size_t bottom = config.base_channels << config.depth;
    node = add_block(net, config, "bottleneck", node, in_ch, bottom);
    in_ch = bottom;
    for (std::size_t i = config.depth; i-- > 0;) {
        const std::size_t ch = channels[i];
        const std::string prefix = "dec" + std::to_string(i);
        if (config.upsample == UpsampleMode::transposed) {
            node = net.add(prefix + "_up", TransposedConv2D{in_ch, ch, 2, 2, 0});
        } else {
            net.add(prefix + "_upsample", Upsample{2});
            node = net.add(prefix + "_up", Conv2D{in_ch, ch, 3, 1, 1});
        }
        node = net.add(prefix + "_concat", Concat{}, std::vector<int>{node, skips[i]});
        node = add_block(net, config, prefix, node, 2 * ch, ch);
        in_ch = ch;
    }
    net.add("head", Conv2D{in_ch, 1, 1, 1, 0});
    net.add("sigmoid", Activation{ActivationKind::sigmoid});
    return net;
}

std::vector<BinaryMask> predict_masks(const Network<float>& model, const std::vector<Image>& images, double threshold,
                                      std::size_t batch_size) {
    const Shape& in = model.input_shape();
    if (in.size() != 3 || in[0] != 1) throw ArgumentError("segmentation model must take one-channel images");
    const Shape out = model.output_shape();
    if (out != in) throw IntegrationError("segmentation model output " + to_string(out) + " differs from its input");
    if (batch_size == 0) batch_size = 1;
    std::vector<BinaryMask> masks;
    masks.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += batch_size) {
        const std::size_t end = std::min(images.size(), start + batch_size);
        std::vector<Image> batch;
        for (std::size_t i = start; i < end; ++i) {
            if (images[i].empty()) throw ArgumentError("cannot segment an empty image");
            batch.push_back(resize_bilinear(images[i], in[1], in[2]));
        }
        const Tensor probs = model.predict(to_tensor(batch));
        for (std::size_t i = start; i < end; ++i) {
            BinaryMask m(in[1], in[2]);
            const float* p = probs.data() + (i - start) * m.size();
            for (std::size_t k = 0; k < m.size(); ++k) m.data[k] = p[k] >= threshold ? 1 : 0;
            masks.push_back(resize_nearest(m, images[i].height, images[i].width));
        }
    }
    return masks;
}

BinaryMask predict_mask(const Network<float>& model, const Image& image, double threshold) {
    return predict_masks(model, {image}, threshold, 1).front();
}

}  // namespace sgxp
