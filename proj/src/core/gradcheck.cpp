#include "sgxp/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace sgxp {
namespace {

void check_eps(double eps) {
    if (!(eps > 0.0)) throw ArgumentError("finite-difference step must be positive");
}

std::vector<std::string> tensor_names(const Network<double>& net, const GradCheckOptions& options) {
    std::vector<std::string> names;
    for (const auto& p : net.parameters()) {
        if (!p.frozen) names.push_back(p.name);
    }
    if (options.include_input) names.push_back("input");
    return names;
}

double evaluate_loss(Network<double>& net, const Tensor64& input, const LossFn& loss, const GradCheckOptions& o) {
    return loss(net.forward(input, o.mode, o.seed).output).value;
}

GradCheckReport compare(const std::vector<std::string>& names, const std::vector<Tensor64>& analytic,
                        const std::vector<Tensor64>& numeric) {
    GradCheckReport report;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double e = relative_error(analytic[i], numeric[i]);
        report.tensors.push_back({names[i], e});
        report.max_relative_error = std::max(report.max_relative_error, e);
    }
    return report;
}

}  // namespace

double relative_error(const Tensor64& analytic, const Tensor64& numeric) {
    if (analytic.shape() != numeric.shape()) throw ArgumentError("gradient shapes differ");
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

std::vector<Tensor64> analytic_gradients(Network<double>& net, const Tensor64& input, const LossFn& loss,
                                         const GradCheckOptions& options) {
    auto fwd = net.forward(input, options.mode, options.seed);
    const auto l = loss(fwd.output);
    BackwardOptions bo;
    bo.input_gradient = options.include_input;
    auto grads = net.backward(fwd.tape, l.gradient, bo);
    std::vector<Tensor64> out;
    for (auto& g : grads.params) {
        if (g) out.push_back(std::move(*g));
    }
    if (options.include_input) out.push_back(std::move(grads.input));
    return out;
}

std::vector<Tensor64> numeric_gradients(Network<double>& net, const Tensor64& input, const LossFn& loss,
                                        const GradCheckOptions& options) {
    check_eps(options.eps);
    const double eps = options.eps;
    std::vector<Tensor64> out;
    auto probe = [&](double& slot) {
        const double saved = slot;
        slot = saved + eps;
        const double up = evaluate_loss(net, input, loss, options);
        slot = saved - eps;
        const double down = evaluate_loss(net, input, loss, options);
        slot = saved;
        return (up - down) / (2.0 * eps);
    };
    for (auto& p : net.parameters()) {
        if (p.frozen) continue;
        Tensor64 g(p.value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = probe(p.value[i]);
        out.push_back(std::move(g));
    }
    if (options.include_input) {
        Tensor64 x = input;
        Tensor64 g(x.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double saved = x[i];
            x[i] = saved + eps;
            const double up = evaluate_loss(net, x, loss, options);
            x[i] = saved - eps;
            const double down = evaluate_loss(net, x, loss, options);
            x[i] = saved;
            g[i] = (up - down) / (2.0 * eps);
        }
        out.push_back(std::move(g));
    }
    return out;
}

GradCheckReport gradient_check(Network<double>& net, const Tensor64& input, const LossFn& loss,
                               const GradCheckOptions& options) {
    check_eps(options.eps);
    const auto analytic = analytic_gradients(net, input, loss, options);
    const auto numeric = numeric_gradients(net, input, loss, options);
    return compare(tensor_names(net, options), analytic, numeric);
}

double check_gradients(Network<double>& net, const Tensor64& input, const LossFn& loss, double eps) {
    GradCheckOptions options;
    options.eps = eps;
    return gradient_check(net, input, loss, options).max_relative_error;
}

GradCheckReport gradient_check_real32(Network<float>& net, const Tensor& input, const LossFn& loss,
                                      const GradCheckOptions& options) {
    check_eps(options.eps);
    auto fwd = net.forward(input, options.mode, options.seed);
    const auto l = loss(fwd.output.cast<double>());
    BackwardOptions bo;
    bo.input_gradient = options.include_input;
    auto grads = net.backward(fwd.tape, l.gradient.cast<float>(), bo);
    std::vector<Tensor64> analytic;
    for (auto& g : grads.params) {
        if (g) analytic.push_back(g->cast<double>());
    }
    if (options.include_input) analytic.push_back(grads.input.cast<double>());

    Network<double> reference = net.cast<double>();
    const auto numeric = numeric_gradients(reference, input.cast<double>(), loss, options);
    return compare(tensor_names(reference, options), analytic, numeric);
}

}  // namespace sgxp
