#pragma once

#include "sgxp/core/tensor.hpp"

namespace sgxp {

template <typename T>
struct LossResult {
    double value = 0.0;
    /// d(loss)/d(prediction), same shape as the prediction.
    BasicTensor<T> gradient;
};

/// Mean over the batch of -sum_k t_k log(max(p_k, 1e-7)). Inputs are (N, K).
template <typename T>
LossResult<T> cross_entropy_loss(const BasicTensor<T>& probabilities, const BasicTensor<T>& one_hot);

/// Batch mean of 1 - (I + s) / (U + s) per sample, with I = sum(p*t) and U = sum(p) + sum(t) - I.
/// The first axis is the batch axis.
template <typename T>
LossResult<T> soft_jaccard_loss(const BasicTensor<T>& predicted, const BasicTensor<T>& target, double smoothing = 1.0);

}  // namespace sgxp
