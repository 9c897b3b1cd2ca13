#pragma once

// One small network per layer type, used by the gradient checks.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sgxp/core/gradcheck.hpp"
#include "sgxp/core/random.hpp"

namespace sgxp::testing {

inline Tensor64 random_tensor(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
    Rng rng(derive_seed(seed, "test-tensor"));
    std::normal_distribution<double> normal(0.0, scale);
    Tensor64 t(shape);
    for (auto& v : t.values()) v = normal(rng);
    return t;
}

/// L = sum_i r_i * y_i with fixed random r; dL/dy = r.
inline LossFn linear_probe(std::uint64_t seed) {
    return [seed](const Tensor64& y) {
        LossResult<double> out{0.0, random_tensor(y.shape(), derive_seed(seed, "probe"))};
        for (std::size_t i = 0; i < y.size(); ++i) out.value += out.gradient[i] * y[i];
        return out;
    };
}

struct ZooCase {
    std::string name;
    Shape input_shape;  // per sample
    std::size_t batch = 2;
    std::function<void(Network<double>&)> build;
};

inline std::vector<ZooCase> layer_zoo() {
    return {
        {"conv2d", {2, 4, 4}, 2, [](auto& n) { n.add("c", Conv2D{2, 3, 3, 1, 0}); }},
        {"conv2d_padded_strided", {2, 4, 4}, 2, [](auto& n) { n.add("c", Conv2D{2, 2, 3, 2, 1}); }},
        {"transposed_conv2d", {2, 4, 4}, 2, [](auto& n) { n.add("t", TransposedConv2D{2, 3, 2, 2, 0}); }},
        {"maxpool2d", {2, 4, 4}, 2, [](auto& n) { n.add("p", MaxPool2D{2}); }},
        {"batchnorm_spatial", {3, 4, 4}, 3, [](auto& n) { n.add("b", BatchNorm{3}); }},
        {"batchnorm_dense", {5}, 4, [](auto& n) { n.add("b", BatchNorm{5}); }},
        {"dropout", {2, 4, 4}, 2, [](auto& n) { n.add("d", Dropout{0.3}); }},
        {"dense", {6}, 3, [](auto& n) { n.add("f", Dense{6, 4}); }},
        {"relu", {2, 4, 4}, 2, [](auto& n) { n.add("a", Activation{ActivationKind::relu}); }},
        {"sigmoid", {2, 4, 4}, 2, [](auto& n) { n.add("a", Activation{ActivationKind::sigmoid}); }},
        {"softmax", {5}, 3, [](auto& n) { n.add("a", Activation{ActivationKind::softmax}); }},
        {"concat", {2, 4, 4}, 2,
         [](auto& n) {
             const int a = n.add("c1", Conv2D{2, 2, 1, 1, 0}, std::vector<int>{kNetworkInput});
             n.add("cat", Concat{}, {a, kNetworkInput});
         }},
        {"flatten", {2, 4, 4}, 2, [](auto& n) { n.add("f", Flatten{}); }},
        {"global_avg_pool", {2, 4, 4}, 2, [](auto& n) { n.add("g", GlobalAvgPool{}); }},
        {"upsample", {2, 4, 4}, 2, [](auto& n) { n.add("u", Upsample{2}); }},
    };
}

inline Network<double> build_case(const ZooCase& c, std::uint64_t seed) {
    Network<double> net(c.input_shape);
    c.build(net);
    net.initialize(seed);
    // Perturb every parameter so BatchNorm scale/shift and biases are exercised away from 1 / 0.
    Rng rng(derive_seed(seed, "perturb"));
    for (auto& p : net.parameters()) {
        for (auto& v : p.value.values()) v += uniform(rng, -0.5, 0.5);
    }
    return net;
}

inline Shape batch_shape(const ZooCase& c) {
    Shape s{c.batch};
    s.insert(s.end(), c.input_shape.begin(), c.input_shape.end());
    return s;
}

}  // namespace sgxp::testing
