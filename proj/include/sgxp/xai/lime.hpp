#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgxp/core/random.hpp"
#include "sgxp/xai/quickshift.hpp"

namespace sgxp {

/// Maps a batch of images to one probability vector each.
using Blackbox = std::function<std::vector<std::vector<double>>(const std::vector<Image>&)>;

struct LimeConfig {
    QuickshiftConfig quickshift;
    /// Perturbed samples including the unperturbed all-ones row.
    std::size_t n_samples = 1000;
    std::size_t n_features = 5;
    bool positive_only = true;
    double kernel_width = 0.25;
    double ridge_lambda = 1.0;
    /// Images per blackbox call.
    std::size_t batch_size = 100;

    void validate() const;
};

void to_json(nlohmann::json& j, const LimeConfig& c);
void from_json(const nlohmann::json& j, LimeConfig& c);

struct SuperpixelWeight {
    int id = 0;
    double weight = 0.0;
};

struct Explanation {
    std::string image_id;
    std::string class_name;
    std::string method = "lime";
    /// Selected superpixels, descending weight.
    std::vector<SuperpixelWeight> superpixels;
    /// Surrogate coefficient of every superpixel, indexed by id.
    std::vector<double> weights;
    double intercept = 0.0;
    SuperpixelMap segments;
};

/// {image_id, class, method, superpixels: [{id, weight}]}
nlohmann::json to_json(const Explanation& e);

/// Local surrogate around `image`: quickshift superpixels, random on/off patterns (off
/// superpixels take the image mean), exponential kernel on the cosine distance to the
/// all-ones pattern, weighted ridge with an unpenalized intercept. Throws IntegrationError
/// when the blackbox does not return probability vectors.
Explanation lime_explain(const Image& image, const Blackbox& blackbox, std::size_t target_class,
                         const LimeConfig& config, Rng& rng);

/// Variant on precomputed superpixels.
Explanation lime_explain(const Image& image, const SuperpixelMap& segments, const Blackbox& blackbox,
                         std::size_t target_class, const LimeConfig& config, Rng& rng);

/// Weighted ridge: minimizes sum_i w_i (y_i - b - x_i . beta)^2 + lambda |beta|^2.
/// Rows of `x` are samples. Returns beta followed by the intercept b.
std::vector<double> weighted_ridge(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                                   const std::vector<double>& w, double lambda);

}  // namespace sgxp
