#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "sgxp/core/image.hpp"

namespace sgxp {

/// Raw 8-bit samples of a binary PGM (P5, maxval 1..255).
struct Pgm {
    Grid<std::uint8_t> pixels;
    int maxval = 255;
};

/// Throws FormatError with the byte offset of the first malformed token.
Pgm decode_pgm(std::string_view bytes);
std::string encode_pgm(const Grid<std::uint8_t>& pixels, int maxval = 255);

/// Samples divided by maxval.
Image pgm_to_image(const Pgm& pgm);
/// round(clamp(v, 0, 1) * 255).
Grid<std::uint8_t> quantize(const Image& image);

/// 0 and maxval map to 0 and 1; any other sample raises ArgumentError.
BinaryMask pgm_to_mask(const Pgm& pgm);
/// 0 / 255 samples.
std::string encode_mask(const BinaryMask& mask);

/// Rescaled to [0, 1]; resized bilinearly when `size` is non-zero.
Image load_image(const std::filesystem::path& path, std::size_t size = 0);
void save_image(const std::filesystem::path& path, const Image& image);
BinaryMask load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// Grayscale PFM ("Pf"), negative scale (little-endian), rows stored bottom to top.
Image decode_pfm(std::string_view bytes);
std::string encode_pfm(const Image& map);
Image load_heatmap(const std::filesystem::path& path);
void save_heatmap(const std::filesystem::path& path, const Image& map);
/// Narrowed to float32.
void save_heatmap(const std::filesystem::path& path, const Grid<double>& map);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace sgxp
