#pragma once

#include <stdexcept>

#include "sgxp/core/image.hpp"

namespace sgxp {

// --- morphology -------------------------------------------------------------
// Disk structuring element {(dy, dx) : dy^2 + dx^2 <= r^2}. Pixels outside the frame are
// ignored: they neither erode a border pixel nor dilate into the frame.

BinaryMask erode(const BinaryMask& mask, int radius);
BinaryMask dilate(const BinaryMask& mask, int radius);
BinaryMask open(const BinaryMask& mask, int radius);

/// Opening with `open_radius`, then dilation with `dilate_radius`.
BinaryMask postprocess_mask(const BinaryMask& mask, int open_radius, int dilate_radius);

/// round(5 * size / 400): the disk radius equivalent to 5 px at 400 px.
int default_morphology_radius(std::size_t size);

// --- ROI --------------------------------------------------------------------

/// Raised when a mask has no foreground; the sample belongs in the review queue.
class EmptyRoi : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inclusive pixel bounds.
struct BoundingBox {
    std::size_t top = 0, left = 0, bottom = 0, right = 0;
    std::size_t height() const { return bottom - top + 1; }
    std::size_t width() const { return right - left + 1; }
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

BoundingBox mask_bounds(const BinaryMask& mask);

struct RoiCrop {
    Image image;
    BoundingBox box;
};

/// Image times mask, cropped to the mask bounds and resized (bilinear) to out_size x out_size.
RoiCrop crop_to_roi(const Image& image, const BinaryMask& mask, std::size_t out_size);

/// round(300 * size / 400): the crop size equivalent to 300 px at 400 px.
std::size_t default_roi_size(std::size_t size);

/// Places a map computed on a crop back into the original frame (zero outside the box).
Image uncrop(const Image& crop_map, const BoundingBox& box, std::size_t height, std::size_t width);

// --- metrics ----------------------------------------------------------------

struct MaskMetrics {
    double jaccard_index = 1.0;
    double jaccard_distance = 0.0;
    double dice = 1.0;
};

/// J = |A n B| / |A u B|, Dice = 2|A n B| / (|A| + |B|); both are 1 when both masks are empty.
MaskMetrics mask_metrics(const BinaryMask& predicted, const BinaryMask& truth);

}  // namespace sgxp
