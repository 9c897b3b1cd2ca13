#include "sgxp/xai/lime.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "sgxp/core/errors.hpp"

namespace sgxp {
namespace {

void check_probabilities(const std::vector<double>& p, std::size_t target) {
    if (p.size() <= target) {
        throw IntegrationError("blackbox returned " + std::to_string(p.size()) + " outputs, class " +
                               std::to_string(target) + " requested");
    }
    double sum = 0.0;
    for (double v : p) {
        if (!std::isfinite(v) || v < -1e-6 || v > 1.0 + 1e-6) {
            throw IntegrationError("blackbox output " + std::to_string(v) + " is not a probability");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-4) {
        throw IntegrationError("blackbox outputs sum to " + std::to_string(sum) + ", not 1");
    }
}

}  // namespace

void LimeConfig::validate() const {
    if (!(quickshift.kernel_size > 0.0)) throw ConfigError("quickshift kernel_size must be positive");
    if (n_samples < 10) throw ConfigError("LIME needs at least 10 samples");
    if (n_features < 1) throw ConfigError("LIME n_features must be at least 1");
    if (!(kernel_width > 0.0)) throw ConfigError("LIME kernel_width must be positive");
    if (ridge_lambda < 0.0) throw ConfigError("ridge lambda must be non-negative");
    if (batch_size == 0) throw ConfigError("LIME batch_size must be positive");
}

void to_json(nlohmann::json& j, const LimeConfig& c) {
    j = {{"kernel_size", c.quickshift.kernel_size},
         {"max_dist", c.quickshift.max_dist > 0.0 ? c.quickshift.max_dist : 2.0 * c.quickshift.kernel_size},
         {"ratio", c.quickshift.ratio},
         {"n_samples", c.n_samples},
         {"n_features", c.n_features},
         {"positive_only", c.positive_only},
         {"kernel_width", c.kernel_width},
         {"ridge_lambda", c.ridge_lambda}};
}

void from_json(const nlohmann::json& j, LimeConfig& c) {
    LimeConfig d = c;
    if (j.contains("kernel_size")) d.quickshift.kernel_size = j.at("kernel_size").get<double>();
    if (j.contains("max_dist")) d.quickshift.max_dist = j.at("max_dist").get<double>();
    if (j.contains("ratio")) d.quickshift.ratio = j.at("ratio").get<double>();
    if (j.contains("n_samples")) d.n_samples = j.at("n_samples").get<std::size_t>();
    if (j.contains("n_features")) d.n_features = j.at("n_features").get<std::size_t>();
    if (j.contains("positive_only")) d.positive_only = j.at("positive_only").get<bool>();
    if (j.contains("kernel_width")) d.kernel_width = j.at("kernel_width").get<double>();
    if (j.contains("ridge_lambda")) d.ridge_lambda = j.at("ridge_lambda").get<double>();
    d.validate();
    c = d;
}

nlohmann::json to_json(const Explanation& e) {
    nlohmann::json sp = nlohmann::json::array();
    for (const auto& s : e.superpixels) sp.push_back({{"id", s.id}, {"weight", s.weight}});
    return {{"image_id", e.image_id}, {"class", e.class_name}, {"method", e.method}, {"superpixels", sp}};
}

std::vector<double> weighted_ridge(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                                   const std::vector<double>& w, double lambda) {
    if (x.empty() || x.size() != y.size() || y.size() != w.size()) throw ArgumentError("ridge inputs differ in length");
    const std::size_t n = x.size(), k = x.front().size();
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(wsum > 0.0)) throw ArgumentError("ridge sample weights sum to zero");
    // Centering on weighted means leaves the intercept out of the penalty.
    Eigen::VectorXd xmean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    double ymean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) xmean[static_cast<Eigen::Index>(j)] += w[i] * x[i][j];
        ymean += w[i] * y[i];
    }
    xmean /= wsum;
    ymean /= wsum;
    Eigen::MatrixXd a = lambda * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    Eigen::VectorXd row(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) row[static_cast<Eigen::Index>(j)] = x[i][j] - xmean[static_cast<Eigen::Index>(j)];
        a.noalias() += w[i] * row * row.transpose();
        b += w[i] * (y[i] - ymean) * row;
    }
    const Eigen::VectorXd beta = a.ldlt().solve(b);
    std::vector<double> out(beta.data(), beta.data() + beta.size());
    out.push_back(ymean - xmean.dot(beta));
    return out;
}

Explanation lime_explain(const Image& image, const Blackbox& blackbox, std::size_t target_class,
                         const LimeConfig& config, Rng& rng) {
    config.validate();
    return lime_explain(image, quickshift(image, config.quickshift), blackbox, target_class, config, rng);
}

Explanation lime_explain(const Image& image, const SuperpixelMap& segments, const Blackbox& blackbox,
                         std::size_t target_class, const LimeConfig& config, Rng& rng) {
    config.validate();
    if (!image.same_size(segments.height, segments.width)) throw ArgumentError("superpixel map size differs from image");
    const std::size_t k = static_cast<std::size_t>(segments.count);
    const float fill = static_cast<float>(
        std::accumulate(image.data.begin(), image.data.end(), 0.0) / static_cast<double>(image.size()));

    // Row 0 is the unperturbed image; the rest switch each superpixel on with probability 1/2.
    std::vector<std::vector<double>> z(config.n_samples, std::vector<double>(k, 1.0));
    for (std::size_t i = 1; i < z.size(); ++i) {
        for (auto& v : z[i]) v = uniform01(rng) < 0.5 ? 0.0 : 1.0;
    }
    std::vector<double> y;
    y.reserve(z.size());
    for (std::size_t start = 0; start < z.size(); start += config.batch_size) {
        const std::size_t end = std::min(z.size(), start + config.batch_size);
        std::vector<Image> batch;
        for (std::size_t i = start; i < end; ++i) {
            Image im = image;
            for (std::size_t p = 0; p < im.size(); ++p) {
                if (z[i][static_cast<std::size_t>(segments.labels[p])] == 0.0) im.data[p] = fill;
            }
            batch.push_back(std::move(im));
        }
        const auto probs = blackbox(batch);
        if (probs.size() != batch.size()) {
            throw IntegrationError("blackbox returned " + std::to_string(probs.size()) + " results for " +
                                   std::to_string(batch.size()) + " images");
        }
        for (const auto& p : probs) {
            check_probabilities(p, target_class);
            y.push_back(p[target_class]);
        }
    }

    // Cosine distance to the all-ones pattern is 1 - sqrt(on / k).
    std::vector<double> w(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double on = std::accumulate(z[i].begin(), z[i].end(), 0.0);
        const double d = on > 0.0 ? 1.0 - std::sqrt(on / static_cast<double>(k)) : 1.0;
        w[i] = std::exp(-d * d / (config.kernel_width * config.kernel_width));
    }
    const auto coef = weighted_ridge(z, y, w, config.ridge_lambda);

    Explanation e;
    e.segments = segments;
    e.weights.assign(coef.begin(), coef.begin() + static_cast<std::ptrdiff_t>(k));
    e.intercept = coef.back();
    std::vector<int> ids(k);
    std::iota(ids.begin(), ids.end(), 0);
    auto key = [&](int id) {
        const double v = e.weights[static_cast<std::size_t>(id)];
        return config.positive_only ? v : std::abs(v);
    };
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return key(a) > key(b); });
    for (int id : ids) {
        if (e.superpixels.size() == config.n_features) break;
        const double v = e.weights[static_cast<std::size_t>(id)];
        if (config.positive_only && !(v > 1e-10)) break;
        e.superpixels.push_back({id, v});
    }
    return e;
}

}  // namespace sgxp
