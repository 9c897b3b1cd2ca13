#pragma once

#include <array>
#include <optional>

#include <json.hpp>

#include "sgxp/core/image.hpp"
#include "sgxp/core/random.hpp"

namespace sgxp {

/// Per-transform probabilities and magnitude limits. Pixel-valued elastic parameters
/// (sigma, alpha_affine) are quoted at `reference_size` and rescaled to the image width.
struct AugmentationConfig {
    double p_hflip = 0.5;
    double p_shift_scale_rotate = 0.5;
    double p_elastic = 0.5;
    double p_brightness = 0.5;
    double p_contrast = 0.5;
    double p_gamma = 0.5;

    double shift_limit = 0.05;
    double scale_limit = 0.05;
    double rotate_limit = 15.0;  // degrees

    double elastic_alpha = 1.0;
    double elastic_sigma = 20.0;
    double elastic_alpha_affine = 20.0;

    double brightness_limit = 0.2;
    double contrast_limit = 0.2;
    double gamma_low = 0.8;
    double gamma_high = 1.2;

    double reference_size = 400.0;

    static AugmentationConfig segmentation();
    static AugmentationConfig classification();
    /// Every probability 0.
    static AugmentationConfig none();

    void validate() const;
};

void to_json(nlohmann::json& j, const AugmentationConfig& c);
void from_json(const nlohmann::json& j, AugmentationConfig& c);

struct PairedSample {
    Image image;
    std::optional<BinaryMask> mask;
};

enum class Transform : std::size_t { hflip, shift_scale_rotate, elastic, brightness, contrast, gamma };
inline constexpr std::size_t kTransformCount = 6;

/// Which transforms fired during one augment() call.
struct AugmentTrace {
    std::array<bool, kTransformCount> fired{};
};

PairedSample horizontal_flip(const PairedSample& sample);

/// Affine map about the image centre: rotation by `angle_deg` (counter-clockwise), isotropic
/// `scale`, then translation by (shift_x * W, shift_y * H). Bilinear for the image, nearest for
/// the mask, zero outside the frame.
PairedSample shift_scale_rotate(const PairedSample& sample, double shift_x, double shift_y, double scale,
                                double angle_deg);
/// Draws shift, scale offset and angle uniformly within the limits, then applies them.
PairedSample shift_scale_rotate(const PairedSample& sample, double shift_limit, double scale_limit,
                                double rotate_limit, Rng& rng);

/// Random three-point affine jitter (bounded by alpha_affine) followed by a dense displacement
/// field of Gaussian-smoothed uniform noise scaled by alpha. Parameters are in pixels.
PairedSample elastic_transform(const PairedSample& sample, double alpha, double sigma, double alpha_affine, Rng& rng);

/// Additive brightness, contrast about the image mean (factor 1 + contrast_delta), then x^gamma.
/// Output clamped to [0, 1] after each step.
Image photometric(const Image& image, double brightness_delta, double contrast_delta, double gamma);

/// Table-order composition; each transform fires independently with its probability.
PairedSample augment(const PairedSample& sample, const AugmentationConfig& config, Rng& rng,
                     AugmentTrace* trace = nullptr);

/// Separable Gaussian filter with reflected borders, truncated at 4 sigma.
std::vector<double> gaussian_filter(const std::vector<double>& field, std::size_t height, std::size_t width,
                                    double sigma);

}  // namespace sgxp
