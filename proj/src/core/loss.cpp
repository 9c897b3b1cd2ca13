#include "sgxp/core/loss.hpp"

#include <cmath>

namespace sgxp {

namespace {
constexpr double kProbabilityFloor = 1e-7;
}

template <typename T>
LossResult<T> cross_entropy_loss(const BasicTensor<T>& probabilities, const BasicTensor<T>& one_hot) {
    if (probabilities.shape() != one_hot.shape() || probabilities.rank() != 2) {
        throw ArgumentError("cross entropy expects equal (N, K) shapes, got " + to_string(probabilities.shape()) +
                            " and " + to_string(one_hot.shape()));
    }
    const std::size_t n = probabilities.dim(0), k = probabilities.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        int ones = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const T t = one_hot.at(i, j);
            if (t == T(1)) {
                ++ones;
            } else if (t != T(0)) {
                ones = -1;
                break;
            }
        }
        if (ones != 1) throw ArgumentError("target row " + std::to_string(i) + " is not one-hot");
    }

    LossResult<T> out{0.0, BasicTensor<T>(probabilities.shape(), T(0))};
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            if (one_hot.at(i, j) == T(0)) continue;
            const double p = probabilities.at(i, j);
            if (p > kProbabilityFloor) {
                out.value -= std::log(p) * scale;
                out.gradient.at(i, j) = static_cast<T>(-scale / p);
            } else {
                out.value -= std::log(kProbabilityFloor) * scale;
            }
        }
    }
    return out;
}

template <typename T>
LossResult<T> soft_jaccard_loss(const BasicTensor<T>& predicted, const BasicTensor<T>& target, double smoothing) {
    if (predicted.shape() != target.shape() || predicted.rank() < 1) {
        throw ArgumentError("soft Jaccard expects equal shapes, got " + to_string(predicted.shape()) + " and " +
                            to_string(target.shape()));
    }
    if (smoothing < 0.0) throw ArgumentError("smoothing must be non-negative");
    const std::size_t n = predicted.dim(0);
    const std::size_t per = predicted.size() / n;
    LossResult<T> out{0.0, BasicTensor<T>(predicted.shape(), T(0))};
    for (std::size_t s = 0; s < n; ++s) {
        const T* p = predicted.data() + s * per;
        const T* t = target.data() + s * per;
        double inter = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            inter += static_cast<double>(p[i]) * t[i];
            sum += static_cast<double>(p[i]) + t[i];
        }
        const double uni = sum - inter;
        const double den = uni + smoothing;
        if (den <= 0.0) continue;  // both empty and no smoothing: perfect match
        const double num = inter + smoothing;
        out.value += (1.0 - num / den) / static_cast<double>(n);
        T* g = out.gradient.data() + s * per;
        for (std::size_t i = 0; i < per; ++i) {
            const double dnum = t[i];
            const double dden = 1.0 - t[i];
            g[i] = static_cast<T>(-(dnum * den - num * dden) / (den * den) / static_cast<double>(n));
        }
    }
    return out;
}

template LossResult<float> cross_entropy_loss(const BasicTensor<float>&, const BasicTensor<float>&);
template LossResult<double> cross_entropy_loss(const BasicTensor<double>&, const BasicTensor<double>&);
template LossResult<float> soft_jaccard_loss(const BasicTensor<float>&, const BasicTensor<float>&, double);
template LossResult<double> soft_jaccard_loss(const BasicTensor<double>&, const BasicTensor<double>&, double);

}  // namespace sgxp
