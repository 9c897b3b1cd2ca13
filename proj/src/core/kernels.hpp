#pragma once

// Dense kernels shared by the convolution layers. Internal to sgxp_core.

#include <cstddef>
#include <cstring>

#include <Eigen/Core>

namespace sgxp::detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
    std::size_t channels, height, width;  // image being sampled
    std::size_t kernel, stride, padding;
    std::size_t out_height, out_width;

    std::size_t rows() const { return channels * kernel * kernel; }
    std::size_t cols() const { return out_height * out_width; }
};

/// cols[(c*K + ky)*K + kx][oy*Wo + ox] = image[c][oy*s - p + ky][ox*s - p + kx] (0 outside).
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols) {
    const std::size_t ncols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        const T* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * ncols;
                for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                    T* dst = row + oy * g.out_width;
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
                    if (iy < 0 || iy >= static_cast<long>(g.height)) {
                        std::memset(dst, 0, g.out_width * sizeof(T));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * g.width;
                    for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T(0) : src[ix];
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters-and-adds columns back into an image buffer (not cleared).
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* image) {
    const std::size_t ncols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        T* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * ncols;
                for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
                    if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                    T* dst = plane + static_cast<std::size_t>(iy) * g.width;
                    const T* src = row + oy * g.out_width;
                    for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
                        if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace sgxp::detail
