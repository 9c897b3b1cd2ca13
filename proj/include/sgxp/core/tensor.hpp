#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgxp/core/errors.hpp"

namespace sgxp {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

/// Dense row-major n-dimensional array. Batched image tensors are NCHW.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
        check_dims();
    }

    BasicTensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
        check_dims();
        if (data_.size() != shape_size(shape_)) {
            throw ArgumentError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                to_string(shape_));
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    void reshape(Shape shape) {
        if (shape_size(shape) != data_.size()) {
            throw ArgumentError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
        }
        shape_ = std::move(shape);
    }
    BasicTensor reshaped(Shape shape) const {
        BasicTensor out = *this;
        out.reshape(std::move(shape));
        return out;
    }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    BasicTensor& operator+=(const BasicTensor& other) {
        if (other.shape_ != shape_) throw ArgumentError("tensor shape mismatch in +=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_dims() const {
        for (std::size_t d : shape_) {
            if (d == 0) throw ArgumentError("tensor dimensions must be positive, got " + to_string(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

}  // namespace sgxp
