#pragma once

#include <vector>

#include "sgxp/core/image.hpp"

namespace sgxp {

/// Per-pixel segment labels 0..count-1; every label's pixels are 4-connected.
struct SuperpixelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<int> labels;
    int count = 0;

    int operator()(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
    std::vector<std::size_t> areas() const;
};

struct QuickshiftConfig {
    double kernel_size = 4.0;
    /// Non-positive means 2 * kernel_size.
    double max_dist = 0.0;
    /// Weight of intensity against position; intensity is first scaled to 0..100.
    double ratio = 1.0;
    /// Segments smaller than this are merged into their most similar 4-neighbour.
    std::size_t min_size = 4;
};

/// Mode seeking on (ratio * 100 * intensity, y, x): Gaussian density over a 3-sigma window,
/// each pixel linked to its nearest higher-density pixel closer than max_dist in that space.
/// Trees are split into 4-connected pieces, small pieces merged, and labels numbered by first
/// occurrence in row-major order.
SuperpixelMap quickshift(const Image& image, const QuickshiftConfig& config = {});

}  // namespace sgxp
