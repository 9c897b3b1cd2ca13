#include "sgxp/core/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgxp {

std::size_t mask_area(const BinaryMask& mask) {
    return static_cast<std::size_t>(std::count(mask.data.begin(), mask.data.end(), std::uint8_t{1}));
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
    if (image.empty() || height == 0 || width == 0) throw ArgumentError("cannot resize an empty image");
    if (image.same_size(height, width)) return image;
    Image out(height, width);
    const double sy = static_cast<double>(image.height) / static_cast<double>(height);
    const double sx = static_cast<double>(image.width) / static_cast<double>(width);
    const double ymax = static_cast<double>(image.height - 1);
    const double xmax = static_cast<double>(image.width - 1);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, ymax);
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, xmax);
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = image(y0, x0) * (1.0 - wx) + image(y0, x1) * wx;
            const double bottom = image(y1, x0) * (1.0 - wx) + image(y1, x1) * wx;
            out(y, x) = static_cast<float>(top * (1.0 - wy) + bottom * wy);
        }
    }
    return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, std::size_t height, std::size_t width) {
    if (mask.empty() || height == 0 || width == 0) throw ArgumentError("cannot resize an empty mask");
    if (mask.same_size(height, width)) return mask;
    BinaryMask out(height, width);
    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = std::min(y * mask.height / height, mask.height - 1);
        for (std::size_t x = 0; x < width; ++x) {
            out(y, x) = mask(sy, std::min(x * mask.width / width, mask.width - 1));
        }
    }
    return out;
}

Tensor to_tensor(const std::vector<Image>& images) {
    if (images.empty()) throw ArgumentError("no images to stack");
    const std::size_t h = images.front().height, w = images.front().width;
    std::vector<float> data;
    data.reserve(images.size() * h * w);
    for (const auto& im : images) {
        if (!im.same_size(h, w)) throw ArgumentError("images in a batch must share one size");
        data.insert(data.end(), im.data.begin(), im.data.end());
    }
    return Tensor({images.size(), 1, h, w}, std::move(data));
}

Tensor to_tensor(const Image& image) { return to_tensor(std::vector<Image>{image}); }

Tensor to_tensor(const std::vector<BinaryMask>& masks) {
    if (masks.empty()) throw ArgumentError("no masks to stack");
    const std::size_t h = masks.front().height, w = masks.front().width;
    std::vector<float> data;
    data.reserve(masks.size() * h * w);
    for (const auto& m : masks) {
        if (!m.same_size(h, w)) throw ArgumentError("masks in a batch must share one size");
        for (auto v : m.data) data.push_back(static_cast<float>(v));
    }
    return Tensor({masks.size(), 1, h, w}, std::move(data));
}

Image tensor_plane(const Tensor& t, std::size_t n, std::size_t c) {
    if (t.rank() != 4 || n >= t.dim(0) || c >= t.dim(1)) throw ArgumentError("tensor_plane: bad index or rank");
    Image out(t.dim(2), t.dim(3));
    const float* src = t.data() + (n * t.dim(1) + c) * out.size();
    std::copy(src, src + out.size(), out.data.begin());
    return out;
}

}  // namespace sgxp
