#pragma once

#include <json.hpp>

#include "sgxp/core/image.hpp"
#include "sgxp/core/network.hpp"

namespace sgxp {

enum class UpsampleMode { transposed, nearest };

struct UNetConfig {
    std::size_t input_size = 64;
    std::size_t depth = 3;
    std::size_t base_channels = 8;
    double dropout_rate = 0.1;
    bool batchnorm = true;
    UpsampleMode upsample = UpsampleMode::transposed;

    void validate() const;
};

void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);

/// Encoder blocks (conv-BN-ReLU-dropout-conv-BN-ReLU, then 2x2 max-pool), a bottleneck block,
/// and a mirrored decoder whose up-sampled maps are concatenated with the encoder skips.
/// Ends in a 1x1 convolution and a sigmoid: one channel at input resolution.
Network<float> build_unet(const UNetConfig& config);

/// Sigmoid output thresholded at `threshold` (pixel = 1 iff p >= threshold). The image is
/// resized to the model input and the mask is returned at the image's own size.
BinaryMask predict_mask(const Network<float>& model, const Image& image, double threshold = 0.5);
std::vector<BinaryMask> predict_masks(const Network<float>& model, const std::vector<Image>& images,
                                      double threshold = 0.5, std::size_t batch_size = 16);

}  // namespace sgxp
