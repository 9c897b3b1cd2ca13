#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sgxp/core/image.hpp"
#include "sgxp/core/network.hpp"
#include "sgxp/xai/lime.hpp"

namespace sgxp {

/// Feature-map activations and class-score gradients at the network's feature node.
template <typename T>
struct CamParts {
    int feature_node = -1;
    int score_node = -1;
    BasicTensor<T> activations;  // (C, h, w)
    BasicTensor<T> gradients;    // (C, h, w)
};

/// The class score is the input of a final softmax (the logit), or the output otherwise.
/// Throws IntegrationError when the network has no convolution.
template <typename T>
CamParts<T> gradcam_parts(const Network<T>& model, const BasicTensor<T>& image, std::size_t target_class);

/// ReLU(sum_k mean(dS/dA_k) A_k), bilinearly resized to the input and divided by its max
/// (a zero map stays zero). The image must have the model's input size.
Image gradcam(const Network<float>& model, const Image& image, std::size_t target_class);

/// Foreground iff cam > 0 and cam >= threshold * max(cam); threshold 0 selects every pixel.
BinaryMask cam_to_mask(const Image& cam, double threshold = 0.5);

/// Union of the explanation's superpixels.
BinaryMask explanation_to_mask(const Explanation& explanation, const SuperpixelMap& segments);

struct HeatmapMeta {
    std::string model_id;
    std::string class_name;
    std::string method;
    std::size_t n_images = 0;
};

nlohmann::json to_json(const HeatmapMeta& m);

struct AggregateHeatmap {
    /// Kept in double so the mean is exact to rounding; persisted as real32.
    Grid<double> map;
    HeatmapMeta meta;
};

/// Pixel-wise mean; n_images is filled in.
AggregateHeatmap aggregate(const std::vector<Image>& maps, HeatmapMeta meta);
AggregateHeatmap aggregate(const std::vector<BinaryMask>& masks, HeatmapMeta meta);

}  // namespace sgxp
