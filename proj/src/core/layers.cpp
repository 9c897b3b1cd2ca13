#include "sgxp/core/layers.hpp"

namespace sgxp {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string activation_name(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::relu: return "relu";
        case ActivationKind::sigmoid: return "sigmoid";
        case ActivationKind::softmax: return "softmax";
    }
    return "relu";
}

ActivationKind activation_from_name(const std::string& name) {
    if (name == "relu") return ActivationKind::relu;
    if (name == "sigmoid") return ActivationKind::sigmoid;
    if (name == "softmax") return ActivationKind::softmax;
    throw ConfigError("unknown activation '" + name + "'");
}

[[noreturn]] void shape_error(const std::string& node, const std::string& detail) {
    throw ConfigError("layer '" + node + "': " + detail);
}

std::size_t conv_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                        const std::string& node) {
    if (in + 2 * padding < kernel) shape_error(node, "kernel larger than padded input");
    return (in + 2 * padding - kernel) / stride + 1;
}

}  // namespace

std::string layer_type_name(const LayerSpec& layer) {
    return std::visit(Overloaded{
                          [](const Conv2D&) { return std::string("conv2d"); },
                          [](const TransposedConv2D&) { return std::string("transposed_conv2d"); },
                          [](const MaxPool2D&) { return std::string("maxpool2d"); },
                          [](const BatchNorm&) { return std::string("batchnorm"); },
                          [](const Dropout&) { return std::string("dropout"); },
                          [](const Dense&) { return std::string("dense"); },
                          [](const Activation&) { return std::string("activation"); },
                          [](const Concat&) { return std::string("concat"); },
                          [](const Flatten&) { return std::string("flatten"); },
                          [](const GlobalAvgPool&) { return std::string("global_avg_pool"); },
                          [](const Upsample&) { return std::string("upsample"); },
                      },
                      layer);
}

bool is_convolution(const LayerSpec& layer) {
    return std::holds_alternative<Conv2D>(layer) || std::holds_alternative<TransposedConv2D>(layer);
}

nlohmann::json layer_to_json(const LayerSpec& layer) {
    nlohmann::json j;
    j["type"] = layer_type_name(layer);
    std::visit(Overloaded{
                   [&](const Conv2D& l) {
                       j["in_channels"] = l.in_channels;
                       j["out_channels"] = l.out_channels;
                       j["kernel"] = l.kernel;
                       j["stride"] = l.stride;
                       j["padding"] = l.padding;
                   },
                   [&](const TransposedConv2D& l) {
                       j["in_channels"] = l.in_channels;
                       j["out_channels"] = l.out_channels;
                       j["kernel"] = l.kernel;
                       j["stride"] = l.stride;
                       j["padding"] = l.padding;
                   },
                   [&](const MaxPool2D& l) { j["window"] = l.window; },
                   [&](const BatchNorm& l) {
                       j["channels"] = l.channels;
                       j["epsilon"] = l.epsilon;
                       j["momentum"] = l.momentum;
                   },
                   [&](const Dropout& l) { j["rate"] = l.rate; },
                   [&](const Dense& l) {
                       j["in"] = l.in;
                       j["out"] = l.out;
                   },
                   [&](const Activation& l) { j["kind"] = activation_name(l.kind); },
                   [&](const Concat&) {},
                   [&](const Flatten&) {},
                   [&](const GlobalAvgPool&) {},
                   [&](const Upsample& l) { j["factor"] = l.factor; },
               },
               layer);
    return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "conv2d") {
        return Conv2D{j.at("in_channels"), j.at("out_channels"), j.at("kernel"), j.at("stride"), j.at("padding")};
    }
    if (type == "transposed_conv2d") {
        return TransposedConv2D{j.at("in_channels"), j.at("out_channels"), j.at("kernel"), j.at("stride"),
                                j.at("padding")};
    }
    if (type == "maxpool2d") return MaxPool2D{j.at("window")};
    if (type == "batchnorm") return BatchNorm{j.at("channels"), j.at("epsilon"), j.at("momentum")};
    if (type == "dropout") return Dropout{j.at("rate")};
    if (type == "dense") return Dense{j.at("in"), j.at("out")};
    if (type == "activation") return Activation{activation_from_name(j.at("kind"))};
    if (type == "concat") return Concat{};
    if (type == "flatten") return Flatten{};
    if (type == "global_avg_pool") return GlobalAvgPool{};
    if (type == "upsample") return Upsample{j.at("factor")};
    throw ConfigError("unknown layer type '" + type + "'");
}

Shape infer_output_shape(const LayerSpec& layer, const std::vector<Shape>& inputs, const std::string& node) {
    if (inputs.empty()) shape_error(node, "no inputs");
    const bool is_concat = std::holds_alternative<Concat>(layer);
    if (!is_concat && inputs.size() != 1) shape_error(node, "expects exactly one input");
    const Shape& in = inputs.front();

    auto require_rank = [&](std::size_t rank) {
        if (in.size() != rank) {
            shape_error(node, "expects rank-" + std::to_string(rank) + " samples, got " + to_string(in));
        }
    };

    return std::visit(
        Overloaded{
            [&](const Conv2D& l) -> Shape {
                require_rank(3);
                if (l.kernel == 0 || l.stride == 0 || l.in_channels == 0 || l.out_channels == 0) {
                    shape_error(node, "conv dimensions must be positive");
                }
                if (in[0] != l.in_channels) {
                    shape_error(node, "expects " + std::to_string(l.in_channels) + " input channels, got " +
                                          std::to_string(in[0]));
                }
                return {l.out_channels, conv_extent(in[1], l.kernel, l.stride, l.padding, node),
                        conv_extent(in[2], l.kernel, l.stride, l.padding, node)};
            },
            [&](const TransposedConv2D& l) -> Shape {
                require_rank(3);
                if (l.kernel == 0 || l.stride == 0 || l.in_channels == 0 || l.out_channels == 0) {
                    shape_error(node, "transposed conv dimensions must be positive");
                }
                if (in[0] != l.in_channels) {
                    shape_error(node, "expects " + std::to_string(l.in_channels) + " input channels, got " +
                                          std::to_string(in[0]));
                }
                const std::size_t h = (in[1] - 1) * l.stride + l.kernel;
                const std::size_t w = (in[2] - 1) * l.stride + l.kernel;
                if (h <= 2 * l.padding || w <= 2 * l.padding) shape_error(node, "padding too large");
                return {l.out_channels, h - 2 * l.padding, w - 2 * l.padding};
            },
            [&](const MaxPool2D& l) -> Shape {
                require_rank(3);
                if (l.window == 0 || in[1] < l.window || in[2] < l.window) shape_error(node, "bad pooling window");
                return {in[0], in[1] / l.window, in[2] / l.window};
            },
            [&](const BatchNorm& l) -> Shape {
                if (in.size() != 1 && in.size() != 3) shape_error(node, "expects rank-1 or rank-3 samples");
                if (in[0] != l.channels) {
                    shape_error(node, "expects " + std::to_string(l.channels) + " channels, got " +
                                          std::to_string(in[0]));
                }
                if (!(l.epsilon > 0.0) || !(l.momentum >= 0.0 && l.momentum < 1.0)) {
                    shape_error(node, "invalid epsilon/momentum");
                }
                return in;
            },
            [&](const Dropout& l) -> Shape {
                if (!(l.rate >= 0.0 && l.rate < 1.0)) shape_error(node, "dropout rate must lie in [0, 1)");
                return in;
            },
            [&](const Dense& l) -> Shape {
                require_rank(1);
                if (in[0] != l.in) {
                    shape_error(node, "expects " + std::to_string(l.in) + " features, got " + std::to_string(in[0]));
                }
                if (l.out == 0) shape_error(node, "dense width must be positive");
                return {l.out};
            },
            [&](const Activation& l) -> Shape {
                if (l.kind == ActivationKind::softmax) require_rank(1);
                return in;
            },
            [&](const Concat&) -> Shape {
                Shape out = in;
                for (std::size_t i = 1; i < inputs.size(); ++i) {
                    const Shape& s = inputs[i];
                    if (s.size() != in.size() || !std::equal(s.begin() + 1, s.end(), in.begin() + 1)) {
                        shape_error(node, "cannot concatenate " + to_string(in) + " with " + to_string(s));
                    }
                    out[0] += s[0];
                }
                return out;
            },
            [&](const Flatten&) -> Shape { return {shape_size(in)}; },
            [&](const GlobalAvgPool&) -> Shape {
                require_rank(3);
                return {in[0]};
            },
            [&](const Upsample& l) -> Shape {
                require_rank(3);
                if (l.factor == 0) shape_error(node, "upsample factor must be positive");
                return {in[0], in[1] * l.factor, in[2] * l.factor};
            },
        },
        layer);
}

}  // namespace sgxp
