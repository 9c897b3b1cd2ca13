#include "sgxp/seg/mask_ops.hpp"

#include <algorithm>
#include <cmath>

#include "sgxp/core/errors.hpp"

namespace sgxp {
namespace {

// Half-widths of the disk rows: span[dy + r] = floor(sqrt(r^2 - dy^2)).
std::vector<long> disk_spans(int radius) {
    std::vector<long> spans;
    for (long dy = -radius; dy <= radius; ++dy) {
        long s = 0;
        while ((s + 1) * (s + 1) + dy * dy <= static_cast<long>(radius) * radius) ++s;
        spans.push_back(s);
    }
    return spans;
}

// erode: every in-frame pixel under the element is set; dilate: at least one is.
BinaryMask sweep(const BinaryMask& mask, int radius, bool erosion) {
    if (radius < 0) throw ArgumentError("structuring element radius must be non-negative");
    if (radius == 0 || mask.empty()) return mask;
    const long h = static_cast<long>(mask.height), w = static_cast<long>(mask.width);
    // prefix[y][x] = number of set pixels in row y before column x.
    std::vector<std::uint32_t> prefix(static_cast<std::size_t>(h * (w + 1)), 0);
    for (long y = 0; y < h; ++y) {
        std::uint32_t* row = prefix.data() + y * (w + 1);
        for (long x = 0; x < w; ++x) row[x + 1] = row[x] + mask.data[static_cast<std::size_t>(y * w + x)];
    }
    const auto spans = disk_spans(radius);
    BinaryMask out(mask.height, mask.width);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            bool value = erosion;
            for (long dy = -radius; dy <= radius && value == erosion; ++dy) {
                const long yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                const long s = spans[static_cast<std::size_t>(dy + radius)];
                const long x0 = std::max(0L, x - s), x1 = std::min(w - 1, x + s);
                const std::uint32_t* row = prefix.data() + yy * (w + 1);
                const auto count = static_cast<long>(row[x1 + 1] - row[x0]);
                if (erosion && count != x1 - x0 + 1) value = false;
                if (!erosion && count > 0) value = true;
            }
            out.data[static_cast<std::size_t>(y * w + x)] = value ? 1 : 0;
        }
    }
    return out;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int radius) { return sweep(mask, radius, true); }
BinaryMask dilate(const BinaryMask& mask, int radius) { return sweep(mask, radius, false); }
BinaryMask open(const BinaryMask& mask, int radius) { return dilate(erode(mask, radius), radius); }

BinaryMask postprocess_mask(const BinaryMask& mask, int open_radius, int dilate_radius) {
    return dilate(open(mask, open_radius), dilate_radius);
}

int default_morphology_radius(std::size_t size) {
    return static_cast<int>(std::lround(5.0 * static_cast<double>(size) / 400.0));
}

BoundingBox mask_bounds(const BinaryMask& mask) {
    BoundingBox box{mask.height, mask.width, 0, 0};
    bool any = false;
    for (std::size_t y = 0; y < mask.height; ++y) {
        for (std::size_t x = 0; x < mask.width; ++x) {
            if (!mask(y, x)) continue;
            any = true;
            box.top = std::min(box.top, y);
            box.left = std::min(box.left, x);
            box.bottom = std::max(box.bottom, y);
            box.right = std::max(box.right, x);
        }
    }
    if (!any) throw EmptyRoi("mask has no foreground pixels");
    return box;
}

RoiCrop crop_to_roi(const Image& image, const BinaryMask& mask, std::size_t out_size) {
    if (!mask.same_size(image)) throw ArgumentError("mask size differs from image size");
    if (out_size == 0) throw ArgumentError("ROI output size must be positive");
    const BoundingBox box = mask_bounds(mask);
    Image crop(box.height(), box.width());
    for (std::size_t y = 0; y < crop.height; ++y) {
        for (std::size_t x = 0; x < crop.width; ++x) {
            crop(y, x) = mask(box.top + y, box.left + x) ? image(box.top + y, box.left + x) : 0.0f;
        }
    }
    return {resize_bilinear(crop, out_size, out_size), box};
}

std::size_t default_roi_size(std::size_t size) {
    return static_cast<std::size_t>(std::lround(300.0 * static_cast<double>(size) / 400.0));
}

Image uncrop(const Image& crop_map, const BoundingBox& box, std::size_t height, std::size_t width) {
    if (box.bottom >= height || box.right >= width) throw ArgumentError("bounding box exceeds the frame");
    const Image fitted = resize_bilinear(crop_map, box.height(), box.width());
    Image out(height, width);
    for (std::size_t y = 0; y < fitted.height; ++y) {
        for (std::size_t x = 0; x < fitted.width; ++x) out(box.top + y, box.left + x) = fitted(y, x);
    }
    return out;
}

MaskMetrics mask_metrics(const BinaryMask& predicted, const BinaryMask& truth) {
    if (!predicted.same_size(truth)) throw ArgumentError("mask dimensions differ");
    std::size_t a = 0, b = 0, both = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted.data[i] != 0, t = truth.data[i] != 0;
        a += p;
        b += t;
        both += p && t;
    }
    MaskMetrics m;
    if (a + b == 0) return m;
    const double uni = static_cast<double>(a + b - both);
    m.jaccard_index = static_cast<double>(both) / uni;
    m.jaccard_distance = 1.0 - m.jaccard_index;
    m.dice = 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
    return m;
}

}  // namespace sgxp
