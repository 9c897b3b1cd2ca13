#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sgxp/core/loss.hpp"
#include "sgxp/core/network.hpp"

namespace sgxp {

/// Scalar objective on a network output, with its gradient.
using LossFn = std::function<LossResult<double>(const Tensor64& output)>;

struct GradCheckOptions {
    double eps = 1e-5;
    /// Also compare d(loss)/d(input); needed for layers without parameters.
    bool include_input = false;
    Mode mode = Mode::train;
    std::uint64_t seed = 0;
};

struct TensorError {
    std::string name;
    double relative_error = 0.0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::vector<TensorError> tensors;
};

/// ||a - n|| / max(||a||, ||n||, 1e-12) over one tensor (Euclidean norms).
double relative_error(const Tensor64& analytic, const Tensor64& numeric);

/// Analytic gradients of every unfrozen parameter (plus the input last, when requested).
std::vector<Tensor64> analytic_gradients(Network<double>& net, const Tensor64& input, const LossFn& loss,
                                         const GradCheckOptions& options = {});
/// Central finite differences in the same order as analytic_gradients.
std::vector<Tensor64> numeric_gradients(Network<double>& net, const Tensor64& input, const LossFn& loss,
                                        const GradCheckOptions& options = {});

GradCheckReport gradient_check(Network<double>& net, const Tensor64& input, const LossFn& loss,
                               const GradCheckOptions& options = {});

/// Max relative error over all parameter tensors; 0 for a network without parameters.
double check_gradients(Network<double>& net, const Tensor64& input, const LossFn& loss, double eps);

/// Single-precision analytic gradients compared against double-precision finite differences
/// of the same weights.
GradCheckReport gradient_check_real32(Network<float>& net, const Tensor& input, const LossFn& loss,
                                      const GradCheckOptions& options = {});

}  // namespace sgxp
