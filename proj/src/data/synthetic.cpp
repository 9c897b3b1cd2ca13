#include "sgxp/data/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "sgxp/core/errors.hpp"
#include "sgxp/core/random.hpp"
#include "sgxp/data/image_io.hpp"

namespace sgxp {
namespace {

std::string padded(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
    return buf;
}

struct Corner {
    std::size_t top, bottom, left, right;
};

Corner glyph_box(std::size_t size, int corner) {
    const auto s = static_cast<double>(size);
    const auto margin = static_cast<std::size_t>(std::lround(0.06 * s));
    const auto height = std::max<std::size_t>(3, static_cast<std::size_t>(std::lround(0.08 * s)));
    const auto far = static_cast<std::size_t>(std::lround(0.29 * s));
    if (corner == 1) return {margin, margin + height, margin, far};
    return {margin, margin + height, size - far, size - margin};
}

// Blocky "characters": two bright columns out of every three, a dark middle row. The first
// corner's tag is twice as long, so the tag still identifies it when the image is mirrored.
void stamp_glyph(Image& im, int corner) {
    Corner b = glyph_box(im.width, corner);
    if (corner == 2) b.left += (b.right - b.left) / 2;
    const std::size_t mid = (b.top + b.bottom) / 2;
    for (std::size_t y = b.top; y < b.bottom; ++y) {
        for (std::size_t x = b.left; x < b.right; ++x) {
            const bool gap = (x - b.left) % 3 == 2 || (y == mid && (x - b.left) % 6 < 3);
            if (!gap) im(y, x) = 0.95f;
        }
    }
}

}  // namespace

void SynthConfig::validate() const {
    if (n < 10) throw ConfigError("the synthetic corpus needs n >= 10");
    if (size < 32) throw ConfigError("the synthetic corpus needs size >= 32");
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
    };
    prob(glyph_correlation, "glyph_correlation");
    prob(source_correlation, "source_correlation");
    prob(opacity_fraction, "opacity_fraction");
    prob(repeat_patient_fraction, "repeat_patient_fraction");
    if (!(lesion_contrast >= 0.0 && lesion_contrast <= 1.0)) throw ConfigError("lesion_contrast must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = {{"n", c.n},
         {"size", c.size},
         {"annotation_bias", c.annotation_bias},
         {"seed", c.seed},
         {"glyph_mode", c.glyph_mode == GlyphMode::source ? "source" : "class"},
         {"glyph_correlation", c.glyph_correlation},
         {"source_correlation", c.source_correlation},
         {"source_texture", c.source_texture},
         {"opacity_fraction", c.opacity_fraction},
         {"repeat_patient_fraction", c.repeat_patient_fraction},
         {"lesion_contrast", c.lesion_contrast}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
    SynthConfig d = c;
    if (j.contains("n")) d.n = j.at("n").get<std::size_t>();
    if (j.contains("size")) d.size = j.at("size").get<std::size_t>();
    if (j.contains("annotation_bias")) d.annotation_bias = j.at("annotation_bias").get<bool>();
    if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("glyph_mode")) {
        const auto m = j.at("glyph_mode").get<std::string>();
        if (m != "class" && m != "source") throw ConfigError("glyph_mode must be class or source");
        d.glyph_mode = m == "source" ? GlyphMode::source : GlyphMode::class_label;
    }
    if (j.contains("glyph_correlation")) d.glyph_correlation = j.at("glyph_correlation").get<double>();
    if (j.contains("source_correlation")) d.source_correlation = j.at("source_correlation").get<double>();
    if (j.contains("source_texture")) d.source_texture = j.at("source_texture").get<bool>();
    if (j.contains("opacity_fraction")) d.opacity_fraction = j.at("opacity_fraction").get<double>();
    if (j.contains("repeat_patient_fraction")) d.repeat_patient_fraction = j.at("repeat_patient_fraction").get<double>();
    if (j.contains("lesion_contrast")) d.lesion_contrast = j.at("lesion_contrast").get<double>();
    d.validate();
    c = d;
}

bool Ellipse::contains(std::size_t y, std::size_t x) const {
    const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
    const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
}

BinaryMask glyph_region(std::size_t size) {
    BinaryMask m(size, size);
    const auto s = static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double fy = static_cast<double>(y), fx = static_cast<double>(x);
            m(y, x) = fy < 0.2 * s && (fx < 0.35 * s || fx >= 0.65 * s) ? 1 : 0;
        }
    }
    return m;
}

SyntheticCorpus generate_synthetic_corpus(const SynthConfig& config) {
    config.validate();
    const std::size_t size = config.size;
    const auto s = static_cast<double>(size);
    SyntheticCorpus c;
    c.classes = {"lung_opacity", "normal"};
    std::size_t patient = 0;
    while (c.images.size() < config.n) {
        Rng prng(derive_seed(config.seed, "synth.patient", patient));
        const bool opacity = uniform01(prng) < config.opacity_fraction;
        const bool cohen = uniform01(prng) < (opacity ? config.source_correlation : 1.0 - config.source_correlation);
        const std::size_t images = uniform01(prng) < config.repeat_patient_fraction ? 2 : 1;
        const std::string pid = padded("p", patient);
        for (std::size_t k = 0; k < images && c.images.size() < config.n; ++k) {
            const std::size_t i = c.images.size();
            Rng rng(derive_seed(config.seed, "synth.image", i));
            Image im(size, size);
            for (std::size_t y = 0; y < size; ++y) {
                for (std::size_t x = 0; x < size; ++x) {
                    double v = 0.1 + 0.06 * uniform01(rng);
                    if (config.source_texture && cohen && (y / 2) % 2 == 0) v += 0.08;
                    im(y, x) = static_cast<float>(v);
                }
            }
            const double jy = uniform(rng, -0.02, 0.02) * s;
            std::array<Ellipse, 2> lungs;
            for (int side = 0; side < 2; ++side) {
                lungs[static_cast<std::size_t>(side)] = {0.55 * s + jy + uniform(rng, -0.01, 0.01) * s,
                                                         (side == 0 ? 0.3 : 0.7) * s + uniform(rng, -0.02, 0.02) * s,
                                                         0.28 * s * uniform(rng, 0.92, 1.08),
                                                         0.14 * s * uniform(rng, 0.92, 1.08)};
            }
            BinaryMask mask(size, size);
            for (std::size_t y = 0; y < size; ++y) {
                for (std::size_t x = 0; x < size; ++x) {
                    if (lungs[0].contains(y, x) || lungs[1].contains(y, x)) {
                        mask(y, x) = 1;
                        im(y, x) = static_cast<float>(0.5 + 0.1 * uniform01(rng));
                    }
                }
            }
            if (opacity) {
                const int blobs = 1 + static_cast<int>(uniform01(rng) * 3.0);
                for (int b = 0; b < blobs; ++b) {
                    const Ellipse& e = lungs[uniform01(rng) < 0.5 ? 0 : 1];
                    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
                    const double radius = 0.6 * std::sqrt(uniform01(rng));
                    const double by = e.cy + radius * e.ry * std::sin(angle);
                    const double bx = e.cx + radius * e.rx * std::cos(angle);
                    const double sigma = uniform(rng, 0.03, 0.06) * s;
                    const double amp = config.lesion_contrast * uniform(rng, 0.8, 1.2);
                    for (std::size_t y = 0; y < size; ++y) {
                        for (std::size_t x = 0; x < size; ++x) {
                            if (!mask(y, x)) continue;
                            const double dy = static_cast<double>(y) + 0.5 - by, dx = static_cast<double>(x) + 0.5 - bx;
                            im(y, x) += static_cast<float>(amp * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma)));
                        }
                    }
                }
            }
            int corner = 0;
            if (config.annotation_bias) {
                const bool first = config.glyph_mode == GlyphMode::source ? cohen : opacity;
                const bool agree = uniform01(rng) < config.glyph_correlation;
                corner = first == agree ? 1 : 2;
            }
            Image clean = pgm_to_image({quantize(im), 255});
            if (corner) stamp_glyph(im, corner);
            c.images.push_back(pgm_to_image({quantize(im), 255}));
            c.clean_images.push_back(std::move(clean));
            c.masks.push_back(std::move(mask));
            c.lungs.push_back(lungs);
            c.labels.push_back(opacity ? 0 : 1);
            c.glyph_corner.push_back(corner);
            const std::string id = padded("img", i);
            static constexpr std::array<const char*, 3> projections = {"PA", "AP", "AP_portable"};
            c.manifest.records.push_back({id, "images/" + id + ".pgm", pid, cohen ? "cohen" : "rsna",
                                          c.classes[c.labels.back()],
                                          projections[static_cast<std::size_t>(uniform01(rng) * 3.0)], std::nullopt, {}});
        }
        ++patient;
    }
    return c;
}

std::vector<std::string> write_corpus(const SyntheticCorpus& corpus, const SynthConfig& config,
                                      const std::filesystem::path& dir) {
    std::vector<std::string> written;
    for (std::size_t i = 0; i < corpus.images.size(); ++i) {
        const std::string& id = corpus.manifest.records[i].id;
        for (const auto& [sub, bytes] : {std::pair<std::string, std::string>{"images/", encode_pgm(quantize(corpus.images[i]))},
                                         {"clean/", encode_pgm(quantize(corpus.clean_images[i]))},
                                         {"masks/", encode_mask(corpus.masks[i])}}) {
            write_file_atomic(dir / (sub + id + ".pgm"), bytes);
            written.push_back(sub + id + ".pgm");
        }
    }
    Manifest m = corpus.manifest;
    m.base_dir = dir;
    write_file_atomic(dir / "manifest.csv", to_csv(m));
    written.emplace_back("manifest.csv");
    write_file_atomic(dir / "synth.json", nlohmann::json(config).dump(2) + "\n");
    written.emplace_back("synth.json");
    return written;
}

std::filesystem::path corpus_mask_path(const Manifest& manifest, const SampleRecord& record) {
    return manifest.base_dir / "masks" / (record.id + ".pgm");
}

}  // namespace sgxp
