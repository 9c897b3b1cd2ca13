#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sgxp/core/tensor.hpp"

namespace sgxp {

/// Row-major 2-D raster.
template <typename T>
struct Grid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(std::size_t h, std::size_t w, T fill = T(0)) : height(h), width(w), data(h * w, fill) {}

    T& operator()(std::size_t y, std::size_t x) { return data[y * width + x]; }
    const T& operator()(std::size_t y, std::size_t x) const { return data[y * width + x]; }
    std::size_t size() const noexcept { return data.size(); }
    bool empty() const noexcept { return data.empty(); }
    bool same_size(std::size_t h, std::size_t w) const noexcept { return height == h && width == w; }
    template <typename U>
    bool same_size(const Grid<U>& o) const noexcept {
        return height == o.height && width == o.width;
    }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.height == b.height && a.width == b.width && a.data == b.data;
    }
};

/// Grayscale image, intensities in [0, 1].
using Image = Grid<float>;
/// Values in {0, 1}.
using BinaryMask = Grid<std::uint8_t>;

std::size_t mask_area(const BinaryMask& mask);

/// Bilinear resampling with half-pixel centres and edge clamping.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);
BinaryMask resize_nearest(const BinaryMask& mask, std::size_t height, std::size_t width);

/// Stacks images into an (N, 1, H, W) tensor.
Tensor to_tensor(const std::vector<Image>& images);
Tensor to_tensor(const Image& image);
Tensor to_tensor(const std::vector<BinaryMask>& masks);
/// Channel `c` of sample `n` of an (N, C, H, W) tensor.
Image tensor_plane(const Tensor& t, std::size_t n, std::size_t c = 0);

}  // namespace sgxp
