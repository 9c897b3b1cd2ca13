#include "sgxp/augment/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace sgxp {
namespace {

double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
}

// Inverse map: output pixel (x, y) samples the source at coordinates returned by `src`.
template <typename Map>
PairedSample remap(const PairedSample& in, Map src) {
    const std::size_t h = in.image.height, w = in.image.width;
    PairedSample out{Image(h, w), std::nullopt};
    if (in.mask) out.mask = BinaryMask(h, w);
    const long lh = static_cast<long>(h), lw = static_cast<long>(w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            auto [sx, sy] = src(static_cast<double>(x), static_cast<double>(y));
            sx = snap(sx);
            sy = snap(sy);
            const double fx = std::floor(sx), fy = std::floor(sy);
            const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
            const double wx = sx - fx, wy = sy - fy;
            double v = 0.0;
            for (int dy = 0; dy < 2; ++dy) {
                const long yy = y0 + dy;
                const double wyy = dy ? wy : 1.0 - wy;
                if (yy < 0 || yy >= lh || wyy == 0.0) continue;
                for (int dx = 0; dx < 2; ++dx) {
                    const long xx = x0 + dx;
                    const double wxx = dx ? wx : 1.0 - wx;
                    if (xx < 0 || xx >= lw || wxx == 0.0) continue;
                    v += wyy * wxx * in.image(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                }
            }
            out.image(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            if (in.mask) {
                const long nx = std::lround(sx), ny = std::lround(sy);
                out.mask->operator()(y, x) = (nx >= 0 && nx < lw && ny >= 0 && ny < lh)
                                                 ? (*in.mask)(static_cast<std::size_t>(ny), static_cast<std::size_t>(nx))
                                                 : std::uint8_t{0};
            }
        }
    }
    return out;
}

void check_sample(const PairedSample& s) {
    if (s.image.empty()) throw ArgumentError("cannot augment an empty image");
    if (s.mask && !s.mask->same_size(s.image)) throw ArgumentError("mask size differs from image size");
}

std::size_t reflect_index(long i, long n) {
    const long period = 2 * n;
    long m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < n ? m : period - 1 - m);
}

}  // namespace

AugmentationConfig AugmentationConfig::segmentation() {
    AugmentationConfig c;
    c.shift_limit = 0.0625;
    c.scale_limit = 0.1;
    c.rotate_limit = 45.0;
    c.elastic_sigma = 50.0;
    c.elastic_alpha_affine = 50.0;
    return c;
}

AugmentationConfig AugmentationConfig::classification() { return AugmentationConfig{}; }

AugmentationConfig AugmentationConfig::none() {
    AugmentationConfig c;
    c.p_hflip = c.p_shift_scale_rotate = c.p_elastic = c.p_brightness = c.p_contrast = c.p_gamma = 0.0;
    return c;
}

void AugmentationConfig::validate() const {
    for (double p : {p_hflip, p_shift_scale_rotate, p_elastic, p_brightness, p_contrast, p_gamma}) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probabilities must lie in [0, 1]");
    }
    for (double l : {shift_limit, scale_limit, rotate_limit, elastic_alpha, elastic_alpha_affine, brightness_limit,
                     contrast_limit}) {
        if (!(l >= 0.0)) throw ConfigError("augmentation limits must be non-negative");
    }
    if (scale_limit >= 1.0) throw ConfigError("scale_limit must be below 1");
    if (!(elastic_sigma > 0.0)) throw ConfigError("elastic sigma must be positive");
    if (!(gamma_low > 0.0 && gamma_high >= gamma_low)) throw ConfigError("gamma range must be positive and ordered");
    if (!(reference_size > 0.0)) throw ConfigError("reference_size must be positive");
}

void to_json(nlohmann::json& j, const AugmentationConfig& c) {
    j = {{"p_hflip", c.p_hflip},
         {"p_shift_scale_rotate", c.p_shift_scale_rotate},
         {"p_elastic", c.p_elastic},
         {"p_brightness", c.p_brightness},
         {"p_contrast", c.p_contrast},
         {"p_gamma", c.p_gamma},
         {"shift_limit", c.shift_limit},
         {"scale_limit", c.scale_limit},
         {"rotate_limit", c.rotate_limit},
         {"elastic_alpha", c.elastic_alpha},
         {"elastic_sigma", c.elastic_sigma},
         {"elastic_alpha_affine", c.elastic_alpha_affine},
         {"brightness_limit", c.brightness_limit},
         {"contrast_limit", c.contrast_limit},
         {"gamma_low", c.gamma_low},
         {"gamma_high", c.gamma_high},
         {"reference_size", c.reference_size}};
}

void from_json(const nlohmann::json& j, AugmentationConfig& c) {
    if (!j.is_object()) throw ConfigError("augmentation config must be a JSON object");
    AugmentationConfig d = c;
    auto get = [&](const char* key, double& field) {
        if (j.contains(key)) field = j.at(key).get<double>();
    };
    get("p_hflip", d.p_hflip);
    get("p_shift_scale_rotate", d.p_shift_scale_rotate);
    get("p_elastic", d.p_elastic);
    get("p_brightness", d.p_brightness);
    get("p_contrast", d.p_contrast);
    get("p_gamma", d.p_gamma);
    get("shift_limit", d.shift_limit);
    get("scale_limit", d.scale_limit);
    get("rotate_limit", d.rotate_limit);
    get("elastic_alpha", d.elastic_alpha);
    get("elastic_sigma", d.elastic_sigma);
    get("elastic_alpha_affine", d.elastic_alpha_affine);
    get("brightness_limit", d.brightness_limit);
    get("contrast_limit", d.contrast_limit);
    get("gamma_low", d.gamma_low);
    get("gamma_high", d.gamma_high);
    get("reference_size", d.reference_size);
    d.validate();
    c = d;
}

PairedSample horizontal_flip(const PairedSample& sample) {
    check_sample(sample);
    PairedSample out = sample;
    const std::size_t w = sample.image.width;
    for (std::size_t y = 0; y < sample.image.height; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            out.image(y, x) = sample.image(y, w - 1 - x);
            if (out.mask) (*out.mask)(y, x) = (*sample.mask)(y, w - 1 - x);
        }
    }
    return out;
}

PairedSample shift_scale_rotate(const PairedSample& sample, double shift_x, double shift_y, double scale,
                                double angle_deg) {
    check_sample(sample);
    if (!(scale > 0.0)) throw ArgumentError("scale must be positive");
    const double theta = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cx = (static_cast<double>(sample.image.width) - 1.0) / 2.0;
    const double cy = (static_cast<double>(sample.image.height) - 1.0) / 2.0;
    const double tx = shift_x * static_cast<double>(sample.image.width);
    const double ty = shift_y * static_cast<double>(sample.image.height);
    // Forward: d = c0 + S R (p - c0) + t, with R = [[c, s], [-s, c]] (y axis pointing down).
    return remap(sample, [&](double x, double y) {
        const double ux = x - cx - tx, uy = y - cy - ty;
        return std::pair{cx + (c * ux - s * uy) / scale, cy + (s * ux + c * uy) / scale};
    });
}

PairedSample shift_scale_rotate(const PairedSample& sample, double shift_limit, double scale_limit,
                                double rotate_limit, Rng& rng) {
    const double angle = uniform(rng, -rotate_limit, rotate_limit);
    const double scale = 1.0 + uniform(rng, -scale_limit, scale_limit);
    const double dx = uniform(rng, -shift_limit, shift_limit);
    const double dy = uniform(rng, -shift_limit, shift_limit);
    return shift_scale_rotate(sample, dx, dy, scale, angle);
}

std::vector<double> gaussian_filter(const std::vector<double>& field, std::size_t height, std::size_t width,
                                    double sigma) {
    if (!(sigma > 0.0)) throw ArgumentError("sigma must be positive");
    if (field.size() != height * width) throw ArgumentError("field size does not match its dimensions");
    const long radius = static_cast<long>(4.0 * sigma + 0.5);
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (auto& v : kernel) v /= total;

    const long lh = static_cast<long>(height), lw = static_cast<long>(width);
    std::vector<double> tmp(field.size()), out(field.size());
    for (long y = 0; y < lh; ++y) {
        for (long x = 0; x < lw; ++x) {
            double acc = 0.0;
            for (long k = -radius; k <= radius; ++k) {
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       field[static_cast<std::size_t>(y) * width + reflect_index(x + k, lw)];
            }
            tmp[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] = acc;
        }
    }
    for (long y = 0; y < lh; ++y) {
        for (long x = 0; x < lw; ++x) {
            double acc = 0.0;
            for (long k = -radius; k <= radius; ++k) {
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       tmp[reflect_index(y + k, lh) * width + static_cast<std::size_t>(x)];
            }
            out[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] = acc;
        }
    }
    return out;
}

PairedSample elastic_transform(const PairedSample& sample, double alpha, double sigma, double alpha_affine, Rng& rng) {
    check_sample(sample);
    if (!(sigma > 0.0)) throw ArgumentError("elastic sigma must be positive");
    if (alpha < 0.0 || alpha_affine < 0.0) throw ArgumentError("elastic magnitudes must be non-negative");
    const std::size_t h = sample.image.height, w = sample.image.width;

    const double cx = static_cast<double>(w / 2), cy = static_cast<double>(h / 2);
    const double sq = static_cast<double>(std::min(h, w) / 3);
    Eigen::Matrix3d from;
    from << cx + sq, cy + sq, 1.0, cx + sq, cy - sq, 1.0, cx - sq, cy - sq, 1.0;
    Eigen::Matrix<double, 3, 2> to;
    for (int i = 0; i < 3; ++i) {
        to(i, 0) = from(i, 0) + uniform(rng, -alpha_affine, alpha_affine);
        to(i, 1) = from(i, 1) + uniform(rng, -alpha_affine, alpha_affine);
    }
    // Forward map d = A p + b through the three point pairs; sampling uses its inverse.
    const Eigen::Matrix<double, 3, 2> coeffs = from.fullPivLu().solve(to);
    Eigen::Matrix2d a;
    a << coeffs(0, 0), coeffs(1, 0), coeffs(0, 1), coeffs(1, 1);
    const Eigen::Vector2d b(coeffs(2, 0), coeffs(2, 1));
    const Eigen::Matrix2d ainv = a.inverse();
    PairedSample warped = remap(sample, [&](double x, double y) {
        const Eigen::Vector2d p = ainv * (Eigen::Vector2d(x, y) - b);
        return std::pair{p.x(), p.y()};
    });

    std::vector<double> dx(h * w), dy(h * w);
    for (auto& v : dx) v = uniform01(rng) * 2.0 - 1.0;
    for (auto& v : dy) v = uniform01(rng) * 2.0 - 1.0;
    dx = gaussian_filter(dx, h, w, sigma);
    dy = gaussian_filter(dy, h, w, sigma);
    return remap(warped, [&](double x, double y) {
        const std::size_t i = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
        return std::pair{x + alpha * dx[i], y + alpha * dy[i]};
    });
}

Image photometric(const Image& image, double brightness_delta, double contrast_delta, double gamma) {
    if (!(gamma > 0.0)) throw ArgumentError("gamma must be positive");
    if (contrast_delta <= -1.0) throw ArgumentError("contrast factor must stay positive");
    Image out = image;
    auto clamp01 = [](double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); };
    if (brightness_delta != 0.0) {
        for (auto& v : out.data) v = clamp01(v + brightness_delta);
    }
    if (contrast_delta != 0.0) {
        double mean = 0.0;
        for (float v : out.data) mean += v;
        mean /= static_cast<double>(out.size());
        const double factor = 1.0 + contrast_delta;
        for (auto& v : out.data) v = clamp01(mean + (v - mean) * factor);
    }
    if (gamma != 1.0) {
        for (auto& v : out.data) v = clamp01(std::pow(static_cast<double>(v), gamma));
    }
    return out;
}

PairedSample augment(const PairedSample& sample, const AugmentationConfig& config, Rng& rng, AugmentTrace* trace) {
    check_sample(sample);
    PairedSample out = sample;
    AugmentTrace local;
    auto fire = [&](Transform t, double p) {
        const bool f = uniform01(rng) < p;
        local.fired[static_cast<std::size_t>(t)] = f;
        return f;
    };
    const double pixel_scale = static_cast<double>(sample.image.width) / config.reference_size;

    if (fire(Transform::hflip, config.p_hflip)) out = horizontal_flip(out);
    if (fire(Transform::shift_scale_rotate, config.p_shift_scale_rotate)) {
        out = shift_scale_rotate(out, config.shift_limit, config.scale_limit, config.rotate_limit, rng);
    }
    if (fire(Transform::elastic, config.p_elastic)) {
        out = elastic_transform(out, config.elastic_alpha, config.elastic_sigma * pixel_scale,
                                config.elastic_alpha_affine * pixel_scale, rng);
    }
    if (fire(Transform::brightness, config.p_brightness)) {
        out.image = photometric(out.image, uniform(rng, -config.brightness_limit, config.brightness_limit), 0.0, 1.0);
    }
    if (fire(Transform::contrast, config.p_contrast)) {
        out.image = photometric(out.image, 0.0, uniform(rng, -config.contrast_limit, config.contrast_limit), 1.0);
    }
    if (fire(Transform::gamma, config.p_gamma)) {
        out.image = photometric(out.image, 0.0, 0.0, uniform(rng, config.gamma_low, config.gamma_high));
    }
    if (trace) *trace = local;
    return out;
}

}  // namespace sgxp
