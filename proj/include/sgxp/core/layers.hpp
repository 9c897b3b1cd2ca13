#pragma once

#include <cstddef>
#include <string>
#include <variant>

#include <json.hpp>

#include "sgxp/core/tensor.hpp"

namespace sgxp {

struct Conv2D {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Weight layout (in_channels, out_channels, kernel, kernel).
struct TransposedConv2D {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 2;
    std::size_t stride = 2;
    std::size_t padding = 0;
};

struct MaxPool2D {
    std::size_t window = 2;
};

/// Normalizes per channel (rank-3 sample) or per feature (rank-1 sample).
/// Running statistics follow r = momentum * r + (1 - momentum) * batch.
struct BatchNorm {
    std::size_t channels = 1;
    double epsilon = 1e-5;
    double momentum = 0.99;
};

/// Inverted dropout: kept activations are scaled by 1 / (1 - rate).
struct Dropout {
    double rate = 0.0;
};

struct Dense {
    std::size_t in = 1;
    std::size_t out = 1;
};

enum class ActivationKind { relu, sigmoid, softmax };

struct Activation {
    ActivationKind kind = ActivationKind::relu;
};

/// Channel-axis concatenation of all node inputs (the skip source is the second input).
struct Concat {};

struct Flatten {};

struct GlobalAvgPool {};

/// Nearest-neighbour upsampling by an integer factor.
struct Upsample {
    std::size_t factor = 2;
};

using LayerSpec = std::variant<Conv2D, TransposedConv2D, MaxPool2D, BatchNorm, Dropout, Dense, Activation, Concat,
                               Flatten, GlobalAvgPool, Upsample>;

std::string layer_type_name(const LayerSpec& layer);
bool is_convolution(const LayerSpec& layer);

nlohmann::json layer_to_json(const LayerSpec& layer);
LayerSpec layer_from_json(const nlohmann::json& j);

/// Per-sample output shape (batch axis excluded); throws ConfigError on incompatible inputs.
Shape infer_output_shape(const LayerSpec& layer, const std::vector<Shape>& inputs, const std::string& node_name);

}  // namespace sgxp
