#include "sgxp/data/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sgxp/core/errors.hpp"

namespace sgxp {
namespace {

// Header tokenizer shared by PGM and PFM: whitespace and '#' comments between tokens.
class HeaderReader {
public:
    explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

    std::size_t pos() const { return pos_; }
    /// Offset of the most recent token.
    std::size_t token_start() const { return start_; }

    std::string token(const char* what) {
        skip_space();
        const std::size_t start = start_ = pos_;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
        if (pos_ == start) throw FormatError(std::string("missing ") + what, start);
        return std::string(bytes_.substr(start, pos_ - start));
    }

    std::size_t positive(const char* what) {
        const std::string t = token(what);
        const std::size_t at = start_;
        if (t.size() > 9 || !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
            std::stoul(t) == 0) {
            throw FormatError(std::string("invalid ") + what + " '" + t + "'", at);
        }
        return std::stoul(t);
    }

    // Exactly one whitespace byte separates the header from the raster.
    void end_of_header() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            throw FormatError("header must end with a single whitespace byte", pos_);
        }
        ++pos_;
    }

private:
    void skip_space() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
    std::size_t start_ = 0;
};

void check_raster(std::string_view bytes, std::size_t start, std::size_t expected) {
    if (bytes.size() - start < expected) {
        throw FormatError("raster truncated: " + std::to_string(bytes.size() - start) + " of " +
                              std::to_string(expected) + " bytes",
                          bytes.size());
    }
    if (bytes.size() - start > expected) throw FormatError("trailing bytes after the raster", start + expected);
}

std::uint32_t load_le32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
    return v;
}

void store_le32(std::uint32_t v, char* p) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

}  // namespace

Pgm decode_pgm(std::string_view bytes) {
    HeaderReader h(bytes);
    if (h.token("magic") != "P5") throw FormatError("not a binary PGM (expected P5)", 0);
    const std::size_t width = h.positive("width");
    const std::size_t height = h.positive("height");
    const std::size_t maxval = h.positive("maxval");
    const std::size_t maxval_at = h.token_start();
    if (maxval > 255) throw FormatError("only 8-bit PGM is supported (maxval " + std::to_string(maxval) + ")", maxval_at);
    h.end_of_header();
    check_raster(bytes, h.pos(), width * height);
    Pgm out{Grid<std::uint8_t>(height, width), static_cast<int>(maxval)};
    std::memcpy(out.pixels.data.data(), bytes.data() + h.pos(), width * height);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        if (out.pixels.data[i] > maxval) throw FormatError("sample exceeds maxval", h.pos() + i);
    }
    return out;
}

std::string encode_pgm(const Grid<std::uint8_t>& pixels, int maxval) {
    if (maxval < 1 || maxval > 255) throw ArgumentError("PGM maxval must lie in 1..255");
    std::string out = "P5\n" + std::to_string(pixels.width) + " " + std::to_string(pixels.height) + "\n" +
                      std::to_string(maxval) + "\n";
    out.append(reinterpret_cast<const char*>(pixels.data.data()), pixels.size());
    return out;
}

Image pgm_to_image(const Pgm& pgm) {
    Image im(pgm.pixels.height, pgm.pixels.width);
    for (std::size_t i = 0; i < im.size(); ++i) {
        im.data[i] = static_cast<float>(pgm.pixels.data[i]) / static_cast<float>(pgm.maxval);
    }
    return im;
}

Grid<std::uint8_t> quantize(const Image& image) {
    Grid<std::uint8_t> out(image.height, image.width);
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double v = std::clamp(static_cast<double>(image.data[i]), 0.0, 1.0);
        out.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

BinaryMask pgm_to_mask(const Pgm& pgm) {
    BinaryMask mask(pgm.pixels.height, pgm.pixels.width);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const int v = pgm.pixels.data[i];
        if (v != 0 && v != pgm.maxval) {
            throw ArgumentError("mask is not binary: sample " + std::to_string(v) + " at pixel " + std::to_string(i));
        }
        mask.data[i] = v == 0 ? 0 : 1;
    }
    return mask;
}

std::string encode_mask(const BinaryMask& mask) {
    Grid<std::uint8_t> px(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.size(); ++i) px.data[i] = mask.data[i] ? 255 : 0;
    return encode_pgm(px);
}

Image load_image(const std::filesystem::path& path, std::size_t size) {
    Image im = pgm_to_image(decode_pgm(read_file(path)));
    if (size > 0 && !im.same_size(size, size)) im = resize_bilinear(im, size, size);
    return im;
}

void save_image(const std::filesystem::path& path, const Image& image) {
    write_file_atomic(path, encode_pgm(quantize(image)));
}

BinaryMask load_mask(const std::filesystem::path& path) { return pgm_to_mask(decode_pgm(read_file(path))); }

void save_mask(const std::filesystem::path& path, const BinaryMask& mask) { write_file_atomic(path, encode_mask(mask)); }

Image decode_pfm(std::string_view bytes) {
    HeaderReader h(bytes);
    const std::string magic = h.token("magic");
    if (magic == "PF") throw FormatError("colour PFM is not supported", 0);
    if (magic != "Pf") throw FormatError("not a grayscale PFM (expected Pf)", 0);
    const std::size_t width = h.positive("width");
    const std::size_t height = h.positive("height");
    const std::string scale_text = h.token("scale");
    const std::size_t scale_at = h.token_start();
    char* end = nullptr;
    const double scale = std::strtod(scale_text.c_str(), &end);
    if (end != scale_text.c_str() + scale_text.size() || !std::isfinite(scale) || scale == 0.0) {
        throw FormatError("invalid PFM scale '" + scale_text + "'", scale_at);
    }
    if (scale > 0.0) throw FormatError("big-endian PFM (positive scale) is not supported", scale_at);
    h.end_of_header();
    check_raster(bytes, h.pos(), width * height * 4);
    Image im(height, width);
    const char* p = bytes.data() + h.pos();
    for (std::size_t row = 0; row < height; ++row) {
        const std::size_t y = height - 1 - row;
        for (std::size_t x = 0; x < width; ++x, p += 4) im(y, x) = std::bit_cast<float>(load_le32(p));
    }
    return im;
}

std::string encode_pfm(const Image& map) {
    std::string out = "Pf\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1.0\n";
    const std::size_t header = out.size();
    out.resize(header + map.size() * 4);
    char* p = out.data() + header;
    for (std::size_t row = 0; row < map.height; ++row) {
        const std::size_t y = map.height - 1 - row;
        for (std::size_t x = 0; x < map.width; ++x, p += 4) store_le32(std::bit_cast<std::uint32_t>(map(y, x)), p);
    }
    return out;
}

Image load_heatmap(const std::filesystem::path& path) { return decode_pfm(read_file(path)); }

void save_heatmap(const std::filesystem::path& path, const Image& map) { write_file_atomic(path, encode_pfm(map)); }

void save_heatmap(const std::filesystem::path& path, const Grid<double>& map) {
    Image narrowed(map.height, map.width);
    for (std::size_t i = 0; i < map.size(); ++i) narrowed.data[i] = static_cast<float>(map.data[i]);
    save_heatmap(path, narrowed);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace sgxp
