#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgxp/core/image.hpp"
#include "sgxp/data/manifest.hpp"

namespace sgxp {

/// What the corner glyph correlates with.
enum class GlyphMode { class_label, source };

struct SynthConfig {
    std::size_t n = 200;
    std::size_t size = 64;
    bool annotation_bias = false;
    std::uint64_t seed = 0;
    GlyphMode glyph_mode = GlyphMode::class_label;
    /// Probability that the glyph sits in the corner of its class (or source); else the other corner.
    double glyph_correlation = 0.95;
    /// P(source = cohen | lung_opacity) = P(source = rsna | normal).
    double source_correlation = 0.5;
    /// Horizontal stripes in the background of cohen images.
    bool source_texture = false;
    double opacity_fraction = 0.5;
    /// Fraction of patients contributing two images.
    double repeat_patient_fraction = 0.2;
    /// Peak intensity added by an opacity blob.
    double lesion_contrast = 0.25;

    void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Centre and semi-axes in pixels.
struct Ellipse {
    double cy = 0.0, cx = 0.0, ry = 0.0, rx = 0.0;
    /// Pixel (y, x) belongs when its centre lies inside.
    bool contains(std::size_t y, std::size_t x) const;
};

struct SyntheticCorpus {
    std::vector<std::string> classes;
    /// Quantized to 8 bits so they equal what the PGM files hold.
    std::vector<Image> images;
    /// The same images without the corner glyph.
    std::vector<Image> clean_images;
    std::vector<BinaryMask> masks;
    std::vector<std::array<Ellipse, 2>> lungs;
    /// Index into classes.
    std::vector<std::size_t> labels;
    /// 0 none, 1 top-left, 2 top-right.
    std::vector<int> glyph_corner;
    Manifest manifest;
};

/// Dark noisy background with two bright jittered ellipses; lung_opacity images add 1-3
/// blurred blobs inside them. With annotation_bias a bright glyph strip is stamped in a top
/// corner outside the lungs: a long tag top-left for lung_opacity (or cohen), a short one
/// top-right otherwise. The length survives horizontal flips, the corner does not.
/// Masks are exactly the ellipse regions. Byte-identical for equal configs.
SyntheticCorpus generate_synthetic_corpus(const SynthConfig& config);

/// Rows < 0.2 size and columns < 0.35 size or >= 0.65 size: where the glyphs may appear.
BinaryMask glyph_region(std::size_t size);

/// images/<id>.pgm, clean/<id>.pgm, masks/<id>.pgm, manifest.csv, synth.json.
/// Returns the written paths relative to `dir`.
std::vector<std::string> write_corpus(const SyntheticCorpus& corpus, const SynthConfig& config,
                                      const std::filesystem::path& dir);

/// Path of a record's mask under the corpus layout (masks/<id>.pgm next to the manifest).
std::filesystem::path corpus_mask_path(const Manifest& manifest, const SampleRecord& record);

}  // namespace sgxp
