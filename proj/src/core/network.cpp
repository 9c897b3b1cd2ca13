#include "sgxp/core/network.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "sgxp/core/random.hpp"

namespace sgxp {
namespace {

using detail::ConstMatrixMap;
using detail::ConvGeometry;
using detail::MatrixMap;
using detail::RowMatrix;

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Shape with_batch(std::size_t n, const Shape& sample) {
    Shape s{n};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

ConvGeometry conv_geometry(const Conv2D& l, const Shape& in, const Shape& out) {
    return {in[1], in[2], in[3], l.kernel, l.stride, l.padding, out[2], out[3]};
}

// Transposed convolution is the adjoint of a convolution sampling the (larger) output.
ConvGeometry transposed_geometry(const TransposedConv2D& l, const Shape& in, const Shape& out) {
    return {out[1], out[2], out[3], l.kernel, l.stride, l.padding, in[2], in[3]};
}

template <typename T>
struct BatchNormStats {
    std::size_t groups;   // channels or features
    std::size_t inner;    // spatial size per group per sample
    std::size_t batch;
};

template <typename T>
BatchNormStats<T> bn_layout(const Shape& s) {
    const std::size_t inner = s.size() == 4 ? s[2] * s[3] : 1;
    return {s[1], inner, s[0]};
}

}  // namespace

template <typename T>
BasicTensor<T> stack_batch(const std::vector<BasicTensor<T>>& samples) {
    if (samples.empty()) throw ArgumentError("cannot stack an empty batch");
    const Shape& s = samples.front().shape();
    std::vector<T> data;
    data.reserve(samples.size() * samples.front().size());
    for (const auto& t : samples) {
        if (t.shape() != s) throw ArgumentError("batch samples have different shapes");
        data.insert(data.end(), t.storage().begin(), t.storage().end());
    }
    return BasicTensor<T>(with_batch(samples.size(), s), std::move(data));
}

template <typename T>
Network<T>::Network(Shape input_shape) : input_shape_(std::move(input_shape)) {
    if (input_shape_.empty() || shape_size(input_shape_) == 0) throw ConfigError("network input shape is empty");
}

template <typename T>
int Network<T>::add(std::string name, LayerSpec layer, bool freezable) {
    const int prev = nodes_.empty() ? kNetworkInput : static_cast<int>(nodes_.size()) - 1;
    return add(std::move(name), std::move(layer), std::vector<int>{prev}, freezable);
}

template <typename T>
int Network<T>::add(std::string name, LayerSpec layer, std::vector<int> inputs, bool freezable) {
    const int index = static_cast<int>(nodes_.size());
    if (name.empty()) name = layer_type_name(layer) + "_" + std::to_string(index);
    for (const auto& n : nodes_) {
        if (n.name == name) throw ConfigError("duplicate layer name '" + name + "'");
    }
    std::vector<Shape> in_shapes;
    for (int i : inputs) {
        if (i == kNetworkInput) {
            in_shapes.push_back(input_shape_);
        } else if (i >= 0 && i < index) {
            in_shapes.push_back(node_shapes_[static_cast<std::size_t>(i)]);
        } else {
            throw ConfigError("layer '" + name + "' references unknown input node " + std::to_string(i));
        }
    }
    Shape out = infer_output_shape(layer, in_shapes, name);

    std::vector<std::size_t> pidx, bidx;
    auto add_param = [&](const std::string& suffix, Shape shape, T fill) {
        pidx.push_back(params_.size());
        params_.push_back({name + "." + suffix, BasicTensor<T>(std::move(shape), fill), index, freezable, false});
    };
    auto add_buffer = [&](const std::string& suffix, Shape shape, T fill) {
        bidx.push_back(buffers_.size());
        buffers_.push_back({name + "." + suffix, BasicTensor<T>(std::move(shape), fill), index});
    };
    std::visit(Overloaded{
                   [&](const Conv2D& l) {
                       add_param("weight", {l.out_channels, l.in_channels, l.kernel, l.kernel}, T(0));
                       add_param("bias", {l.out_channels}, T(0));
                   },
                   [&](const TransposedConv2D& l) {
                       add_param("weight", {l.in_channels, l.out_channels, l.kernel, l.kernel}, T(0));
                       add_param("bias", {l.out_channels}, T(0));
                   },
                   [&](const BatchNorm& l) {
                       add_param("gamma", {l.channels}, T(1));
                       add_param("beta", {l.channels}, T(0));
                       add_buffer("running_mean", {l.channels}, T(0));
                       add_buffer("running_var", {l.channels}, T(1));
                   },
                   [&](const Dense& l) {
                       add_param("weight", {l.out, l.in}, T(0));
                       add_param("bias", {l.out}, T(0));
                   },
                   [](const auto&) {},
               },
               layer);

    nodes_.push_back({std::move(name), std::move(layer), std::move(inputs), freezable});
    node_shapes_.push_back(std::move(out));
    node_params_.push_back(std::move(pidx));
    node_buffers_.push_back(std::move(bidx));
    return index;
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
        Rng rng(derive_seed(seed, "init", n));
        std::size_t fan_in = 0;
        std::visit(Overloaded{
                       [&](const Conv2D& l) { fan_in = l.in_channels * l.kernel * l.kernel; },
                       [&](const TransposedConv2D& l) { fan_in = l.in_channels * l.kernel * l.kernel; },
                       [&](const Dense& l) { fan_in = l.in; },
                       [](const auto&) {},
                   },
                   nodes_[n].layer);
        for (std::size_t p : node_params_[n]) {
            auto& param = params_[p];
            const bool is_weight = param.name.ends_with(".weight");
            if (is_weight && fan_in > 0) {
                const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
                for (auto& v : param.value.values()) v = static_cast<T>(uniform(rng, -limit, limit));
            } else if (param.name.ends_with(".gamma")) {
                param.value.fill(T(1));
            } else {
                param.value.fill(T(0));
            }
        }
        for (std::size_t b : node_buffers_[n]) {
            buffers_[b].value.fill(buffers_[b].name.ends_with(".running_var") ? T(1) : T(0));
        }
    }
}

template <typename T>
Shape Network<T>::output_shape() const {
    if (nodes_.empty()) return input_shape_;
    return node_shapes_.back();
}

template <typename T>
int Network<T>::node_index(const std::string& name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].name == name) return static_cast<int>(i);
    }
    throw ArgumentError("no layer named '" + name + "'");
}

template <typename T>
std::vector<std::size_t> Network<T>::freezable_parameters() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].freezable) out.push_back(i);
    }
    return out;
}

template <typename T>
void Network<T>::set_frozen(bool frozen) {
    for (auto& p : params_) {
        if (p.freezable) p.frozen = frozen;
    }
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

template <typename T>
int Network<T>::feature_node() const {
    if (feature_node_ != -2) return feature_node_;
    int last_conv = -1;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (is_convolution(nodes_[i].layer)) last_conv = static_cast<int>(i);
    }
    if (last_conv < 0) return -1;
    // Follow the conv's own BatchNorm / activation / dropout chain.
    int node = last_conv;
    while (node + 1 < static_cast<int>(nodes_.size())) {
        const auto& next = nodes_[static_cast<std::size_t>(node) + 1];
        const bool chained = next.inputs.size() == 1 && next.inputs[0] == node;
        const bool elementwise = std::holds_alternative<BatchNorm>(next.layer) ||
                                 std::holds_alternative<Activation>(next.layer) ||
                                 std::holds_alternative<Dropout>(next.layer);
        if (!chained || !elementwise) break;
        ++node;
    }
    return node;
}

template <typename T>
BasicTensor<T> Network<T>::run_node(std::size_t index, const std::vector<const BasicTensor<T>*>& inputs, Mode mode,
                                    std::uint64_t seed, NodeCache<T>* cache, bool update_running) {
    const NodeSpec& node = nodes_[index];
    const BasicTensor<T>& x = *inputs.front();
    const std::size_t batch = x.dim(0);
    BasicTensor<T> y(with_batch(batch, node_shapes_[index]));
    const auto& pidx = node_params_[index];

    std::visit(
        Overloaded{
            [&](const Conv2D& l) {
                const ConvGeometry g = conv_geometry(l, x.shape(), y.shape());
                const auto& w = params_[pidx[0]].value;
                const auto& b = params_[pidx[1]].value;
                ConstMatrixMap<T> wm(w.data(), static_cast<Eigen::Index>(l.out_channels),
                                     static_cast<Eigen::Index>(g.rows()));
                RowMatrix<T> cols(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
                const std::size_t in_stride = g.channels * g.height * g.width;
                const std::size_t out_stride = l.out_channels * g.cols();
                for (std::size_t n = 0; n < batch; ++n) {
                    detail::im2col(x.data() + n * in_stride, g, cols.data());
                    MatrixMap<T> ym(y.data() + n * out_stride, static_cast<Eigen::Index>(l.out_channels),
                                    static_cast<Eigen::Index>(g.cols()));
                    ym.noalias() = wm * cols;
                    for (std::size_t o = 0; o < l.out_channels; ++o) ym.row(static_cast<Eigen::Index>(o)).array() += b[o];
                }
            },
            [&](const TransposedConv2D& l) {
                const ConvGeometry g = transposed_geometry(l, x.shape(), y.shape());
                const auto& w = params_[pidx[0]].value;
                const auto& b = params_[pidx[1]].value;
                ConstMatrixMap<T> wm(w.data(), static_cast<Eigen::Index>(l.in_channels),
                                     static_cast<Eigen::Index>(g.rows()));
                RowMatrix<T> cols(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
                const std::size_t in_stride = l.in_channels * g.cols();
                const std::size_t out_stride = g.channels * g.height * g.width;
                y.fill(T(0));
                for (std::size_t n = 0; n < batch; ++n) {
                    ConstMatrixMap<T> xm(x.data() + n * in_stride, static_cast<Eigen::Index>(l.in_channels),
                                         static_cast<Eigen::Index>(g.cols()));
                    cols.noalias() = wm.transpose() * xm;
                    T* out = y.data() + n * out_stride;
                    detail::col2im(cols.data(), g, out);
                    const std::size_t plane = g.height * g.width;
                    for (std::size_t o = 0; o < l.out_channels; ++o) {
                        for (std::size_t i = 0; i < plane; ++i) out[o * plane + i] += b[o];
                    }
                }
            },
            [&](const MaxPool2D& l) {
                const std::size_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
                const std::size_t oh = y.dim(2), ow = y.dim(3);
                std::vector<std::uint32_t> argmax(y.size());
                std::size_t k = 0;
                for (std::size_t n = 0; n < batch; ++n) {
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t base = (n * c + ch) * h * w;
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            for (std::size_t ox = 0; ox < ow; ++ox, ++k) {
                                std::size_t best = base + (oy * l.window) * w + ox * l.window;
                                for (std::size_t dy = 0; dy < l.window; ++dy) {
                                    for (std::size_t dx = 0; dx < l.window; ++dx) {
                                        const std::size_t i = base + (oy * l.window + dy) * w + ox * l.window + dx;
                                        if (x[i] > x[best]) best = i;
                                    }
                                }
                                y[k] = x[best];
                                argmax[k] = static_cast<std::uint32_t>(best);
                            }
                        }
                    }
                }
                if (cache) cache->indices = std::move(argmax);
            },
            [&](const BatchNorm& l) {
                const auto layout = bn_layout<T>(x.shape());
                const auto& gamma = params_[pidx[0]].value;
                const auto& beta = params_[pidx[1]].value;
                auto& running_mean = buffers_[node_buffers_[index][0]].value;
                auto& running_var = buffers_[node_buffers_[index][1]].value;
                BasicTensor<T> xhat(x.shape());
                BasicTensor<T> inv_std({layout.groups});
                const std::size_t count = layout.batch * layout.inner;
                // A frozen BatchNorm runs on its running statistics even while training.
                const bool batch_stats = mode == Mode::train && !params_[pidx[0]].frozen;
                for (std::size_t c = 0; c < layout.groups; ++c) {
                    double mean = 0.0, var = 0.0;
                    if (batch_stats) {
                        for (std::size_t n = 0; n < layout.batch; ++n) {
                            const T* p = x.data() + (n * layout.groups + c) * layout.inner;
                            for (std::size_t i = 0; i < layout.inner; ++i) mean += p[i];
                        }
                        mean /= static_cast<double>(count);
                        for (std::size_t n = 0; n < layout.batch; ++n) {
                            const T* p = x.data() + (n * layout.groups + c) * layout.inner;
                            for (std::size_t i = 0; i < layout.inner; ++i) {
                                const double d = p[i] - mean;
                                var += d * d;
                            }
                        }
                        var /= static_cast<double>(count);
                        if (update_running) {
                            running_mean[c] = static_cast<T>(l.momentum * running_mean[c] + (1.0 - l.momentum) * mean);
                            running_var[c] = static_cast<T>(l.momentum * running_var[c] + (1.0 - l.momentum) * var);
                        }
                    } else {
                        mean = running_mean[c];
                        var = running_var[c];
                    }
                    const T is = static_cast<T>(1.0 / std::sqrt(var + l.epsilon));
                    inv_std[c] = is;
                    const T m = static_cast<T>(mean);
                    for (std::size_t n = 0; n < layout.batch; ++n) {
                        const std::size_t off = (n * layout.groups + c) * layout.inner;
                        for (std::size_t i = 0; i < layout.inner; ++i) {
                            const T xh = (x[off + i] - m) * is;
                            xhat[off + i] = xh;
                            y[off + i] = gamma[c] * xh + beta[c];
                        }
                    }
                }
                if (cache) {
                    cache->saved.push_back(std::move(xhat));
                    cache->saved.push_back(std::move(inv_std));
                    cache->indices.assign(1, batch_stats ? 1u : 0u);
                }
            },
            [&](const Dropout& l) {
                if (mode == Mode::eval || l.rate == 0.0) {
                    y = x;
                    return;
                }
                Rng rng(derive_seed(seed, "dropout", index));
                const double keep = 1.0 - l.rate;
                const T scale = static_cast<T>(1.0 / keep);
                BasicTensor<T> mask(x.shape());
                for (std::size_t i = 0; i < x.size(); ++i) {
                    mask[i] = uniform01(rng) < keep ? scale : T(0);
                    y[i] = x[i] * mask[i];
                }
                if (cache) cache->saved.push_back(std::move(mask));
            },
            [&](const Dense& l) {
                const auto& w = params_[pidx[0]].value;
                const auto& b = params_[pidx[1]].value;
                ConstMatrixMap<T> xm(x.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(l.in));
                ConstMatrixMap<T> wm(w.data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
                MatrixMap<T> ym(y.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(l.out));
                ym.noalias() = xm * wm.transpose();
                for (std::size_t n = 0; n < batch; ++n) {
                    for (std::size_t o = 0; o < l.out; ++o) ym(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(o)) += b[o];
                }
            },
            [&](const Activation& l) {
                switch (l.kind) {
                    case ActivationKind::relu:
                        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
                        break;
                    case ActivationKind::sigmoid:
                        for (std::size_t i = 0; i < x.size(); ++i) {
                            const T v = x[i];
                            y[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
                        }
                        break;
                    case ActivationKind::softmax: {
                        const std::size_t k = x.dim(1);
                        for (std::size_t n = 0; n < batch; ++n) {
                            const T* in = x.data() + n * k;
                            T* out = y.data() + n * k;
                            const T mx = *std::max_element(in, in + k);
                            T sum = 0;
                            for (std::size_t j = 0; j < k; ++j) {
                                out[j] = std::exp(in[j] - mx);
                                sum += out[j];
                            }
                            for (std::size_t j = 0; j < k; ++j) out[j] /= sum;
                        }
                        break;
                    }
                }
            },
            [&](const Concat&) {
                const std::size_t inner = shape_size(Shape(x.shape().begin() + 2, x.shape().end()));
                const std::size_t out_c = y.dim(1);
                for (std::size_t n = 0; n < batch; ++n) {
                    std::size_t c0 = 0;
                    for (const auto* in : inputs) {
                        const std::size_t c = in->dim(1);
                        std::copy_n(in->data() + n * c * inner, c * inner, y.data() + (n * out_c + c0) * inner);
                        c0 += c;
                    }
                }
            },
            [&](const Flatten&) { std::copy(x.storage().begin(), x.storage().end(), y.storage().begin()); },
            [&](const GlobalAvgPool&) {
                const std::size_t c = x.dim(1), plane = x.dim(2) * x.dim(3);
                for (std::size_t i = 0; i < batch * c; ++i) {
                    T sum = 0;
                    for (std::size_t j = 0; j < plane; ++j) sum += x[i * plane + j];
                    y[i] = sum / static_cast<T>(plane);
                }
            },
            [&](const Upsample& l) {
                const std::size_t planes = batch * x.dim(1), h = x.dim(2), w = x.dim(3);
                const std::size_t oh = y.dim(2), ow = y.dim(3);
                for (std::size_t p = 0; p < planes; ++p) {
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            y[(p * oh + oy) * ow + ox] = x[(p * h + oy / l.factor) * w + ox / l.factor];
                        }
                    }
                }
            },
        },
        node.layer);
    return y;
}

template <typename T>
ForwardResult<T> Network<T>::forward(const BasicTensor<T>& input, Mode mode, std::uint64_t seed) {
    if (input.rank() != input_shape_.size() + 1 ||
        !std::equal(input_shape_.begin(), input_shape_.end(), input.shape().begin() + 1)) {
        throw ConfigError("network input expects samples of shape " + to_string(input_shape_) + ", got batch " +
                          to_string(input.shape()));
    }
    ForwardResult<T> result;
    Tape<T>& tape = result.tape;
    tape.mode = mode;
    tape.input = input;
    tape.outputs.reserve(nodes_.size());
    tape.caches.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        std::vector<const BasicTensor<T>*> ins;
        for (int k : nodes_[i].inputs) {
            ins.push_back(k == kNetworkInput ? &tape.input : &tape.outputs[static_cast<std::size_t>(k)]);
        }
        tape.outputs.push_back(run_node(i, ins, mode, seed, &tape.caches[i], true));
    }
    result.output = nodes_.empty() ? input : tape.outputs.back();
    return result;
}

template <typename T>
ForwardResult<T> Network<T>::trace(const BasicTensor<T>& input) const {
    // Eval mode leaves parameters and buffers untouched.
    return const_cast<Network<T>&>(*this).forward(input, Mode::eval);
}

template <typename T>
BasicTensor<T> Network<T>::predict(const BasicTensor<T>& input) const {
    // Eval mode never mutates state, so the const_cast is confined to the shared runner.
    auto& self = const_cast<Network<T>&>(*this);
    if (input.rank() != input_shape_.size() + 1 ||
        !std::equal(input_shape_.begin(), input_shape_.end(), input.shape().begin() + 1)) {
        throw ConfigError("network input expects samples of shape " + to_string(input_shape_) + ", got batch " +
                          to_string(input.shape()));
    }
    std::vector<BasicTensor<T>> outputs;
    outputs.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        std::vector<const BasicTensor<T>*> ins;
        for (int k : nodes_[i].inputs) {
            ins.push_back(k == kNetworkInput ? &input : &outputs[static_cast<std::size_t>(k)]);
        }
        outputs.push_back(self.run_node(i, ins, Mode::eval, 0, nullptr, false));
    }
    return nodes_.empty() ? input : outputs.back();
}

template <typename T>
BasicTensor<T> Network<T>::evaluate_from(const Tape<T>& tape, int node, const BasicTensor<T>& replacement) const {
    auto& self = const_cast<Network<T>&>(*this);
    if (node < 0 || node >= static_cast<int>(nodes_.size())) throw ArgumentError("evaluate_from: bad node index");
    if (replacement.shape() != tape.outputs[static_cast<std::size_t>(node)].shape()) {
        throw ArgumentError("evaluate_from: replacement shape mismatch");
    }
    std::vector<BasicTensor<T>> outputs(tape.outputs.begin(), tape.outputs.begin() + node);
    outputs.push_back(replacement);
    for (std::size_t i = static_cast<std::size_t>(node) + 1; i < nodes_.size(); ++i) {
        std::vector<const BasicTensor<T>*> ins;
        for (int k : nodes_[i].inputs) {
            ins.push_back(k == kNetworkInput ? &tape.input : &outputs[static_cast<std::size_t>(k)]);
        }
        outputs.push_back(self.run_node(i, ins, tape.mode == Mode::train ? Mode::train : Mode::eval, 0, nullptr, false));
    }
    return outputs.back();
}

template <typename T>
Gradients<T> Network<T>::backward(Tape<T>& tape, const BasicTensor<T>& output_gradient,
                                  const BackwardOptions& options) const {
    if (tape.consumed) throw UsageError("tape has already been consumed by a backward pass");
    if (tape.outputs.size() != nodes_.size()) throw UsageError("tape does not belong to this network");
    tape.consumed = true;

    const int count = static_cast<int>(nodes_.size());
    const int seed_node = options.seed_node < 0 ? count - 1 : options.seed_node;
    if (seed_node >= count) throw ArgumentError("backward: seed node out of range");

    Gradients<T> grads;
    grads.params.resize(params_.size());
    for (std::size_t p = 0; p < params_.size(); ++p) {
        if (!params_[p].frozen) grads.params[p] = BasicTensor<T>(params_[p].value.shape(), T(0));
    }
    if (count == 0) {
        if (options.input_gradient) grads.input = output_gradient;
        return grads;
    }
    if (output_gradient.shape() != tape.outputs[static_cast<std::size_t>(seed_node)].shape()) {
        throw ArgumentError("output gradient shape " + to_string(output_gradient.shape()) +
                            " does not match forward output " +
                            to_string(tape.outputs[static_cast<std::size_t>(seed_node)].shape()));
    }

    // A node needs an input gradient when anything upstream of it is trainable.
    std::vector<bool> needs(nodes_.size(), false);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        bool n = options.node_gradients;
        for (std::size_t p : node_params_[i]) n = n || !params_[p].frozen;
        for (int k : nodes_[i].inputs) {
            if (k == kNetworkInput) {
                n = n || options.input_gradient;
            } else {
                n = n || needs[static_cast<std::size_t>(k)];
            }
        }
        needs[i] = n;
    }

    std::vector<BasicTensor<T>> node_grads(nodes_.size());
    node_grads[static_cast<std::size_t>(seed_node)] = output_gradient;
    BasicTensor<T> input_grad;

    auto accumulate = [&](int k, BasicTensor<T>&& g) {
        BasicTensor<T>& dst = k == kNetworkInput ? input_grad : node_grads[static_cast<std::size_t>(k)];
        if (dst.empty()) {
            dst = std::move(g);
        } else {
            dst += g;
        }
    };
    auto wants = [&](int k) {
        return k == kNetworkInput ? options.input_gradient : static_cast<bool>(needs[static_cast<std::size_t>(k)]);
    };

    for (int i = seed_node; i >= 0; --i) {
        const std::size_t idx = static_cast<std::size_t>(i);
        const BasicTensor<T>& dy = node_grads[idx];
        if (dy.empty()) continue;
        const NodeSpec& node = nodes_[idx];
        const auto& pidx = node_params_[idx];
        const BasicTensor<T>& x =
            node.inputs.front() == kNetworkInput ? tape.input : tape.outputs[static_cast<std::size_t>(node.inputs.front())];
        const BasicTensor<T>& y = tape.outputs[idx];
        const NodeCache<T>& cache = tape.caches[idx];
        const std::size_t batch = x.dim(0);
        const bool want_dx = wants(node.inputs.front());
        auto param_grad = [&](std::size_t slot) -> BasicTensor<T>* {
            auto& g = grads.params[pidx[slot]];
            return g ? &*g : nullptr;
        };

        std::visit(
            Overloaded{
                [&](const Conv2D& l) {
                    const ConvGeometry g = conv_geometry(l, x.shape(), y.shape());
                    const auto& w = params_[pidx[0]].value;
                    ConstMatrixMap<T> wm(w.data(), static_cast<Eigen::Index>(l.out_channels),
                                         static_cast<Eigen::Index>(g.rows()));
                    BasicTensor<T>* dw = param_grad(0);
                    BasicTensor<T>* db = param_grad(1);
                    RowMatrix<T> cols(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
                    RowMatrix<T> dcols;
                    BasicTensor<T> dx;
                    if (want_dx) dx = BasicTensor<T>(x.shape(), T(0));
                    const std::size_t in_stride = g.channels * g.height * g.width;
                    const std::size_t out_stride = l.out_channels * g.cols();
                    for (std::size_t n = 0; n < batch; ++n) {
                        ConstMatrixMap<T> dym(dy.data() + n * out_stride, static_cast<Eigen::Index>(l.out_channels),
                                              static_cast<Eigen::Index>(g.cols()));
                        if (dw) {
                            detail::im2col(x.data() + n * in_stride, g, cols.data());
                            MatrixMap<T> dwm(dw->data(), static_cast<Eigen::Index>(l.out_channels),
                                             static_cast<Eigen::Index>(g.rows()));
                            dwm.noalias() += dym * cols.transpose();
                        }
                        if (db) {
                            for (std::size_t o = 0; o < l.out_channels; ++o) {
                                // Plain loop: Eigen's vectorized sum peels by pointer alignment,
                                // which makes the rounding depend on where the buffer landed.
                                const T* row = dy.data() + n * out_stride + o * static_cast<std::size_t>(dym.cols());
                                T acc = 0;
                                for (Eigen::Index k = 0; k < dym.cols(); ++k) acc += row[k];
                                (*db)[o] += acc;
                            }
                        }
                        if (want_dx) {
                            dcols.noalias() = wm.transpose() * dym;
                            detail::col2im(dcols.data(), g, dx.data() + n * in_stride);
                        }
                    }
                    if (want_dx) accumulate(node.inputs.front(), std::move(dx));
                },
                [&](const TransposedConv2D& l) {
                    const ConvGeometry g = transposed_geometry(l, x.shape(), y.shape());
                    const auto& w = params_[pidx[0]].value;
                    ConstMatrixMap<T> wm(w.data(), static_cast<Eigen::Index>(l.in_channels),
                                         static_cast<Eigen::Index>(g.rows()));
                    BasicTensor<T>* dw = param_grad(0);
                    BasicTensor<T>* db = param_grad(1);
                    RowMatrix<T> cols(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
                    BasicTensor<T> dx;
                    if (want_dx) dx = BasicTensor<T>(x.shape(), T(0));
                    const std::size_t in_stride = l.in_channels * g.cols();
                    const std::size_t out_stride = g.channels * g.height * g.width;
                    const std::size_t plane = g.height * g.width;
                    for (std::size_t n = 0; n < batch; ++n) {
                        const T* dyn = dy.data() + n * out_stride;
                        detail::im2col(dyn, g, cols.data());
                        if (dw) {
                            ConstMatrixMap<T> xm(x.data() + n * in_stride, static_cast<Eigen::Index>(l.in_channels),
                                                 static_cast<Eigen::Index>(g.cols()));
                            MatrixMap<T> dwm(dw->data(), static_cast<Eigen::Index>(l.in_channels),
                                             static_cast<Eigen::Index>(g.rows()));
                            dwm.noalias() += xm * cols.transpose();
                        }
                        if (db) {
                            for (std::size_t o = 0; o < l.out_channels; ++o) {
                                T sum = 0;
                                for (std::size_t i2 = 0; i2 < plane; ++i2) sum += dyn[o * plane + i2];
                                (*db)[o] += sum;
                            }
                        }
                        if (want_dx) {
                            MatrixMap<T> dxm(dx.data() + n * in_stride, static_cast<Eigen::Index>(l.in_channels),
                                             static_cast<Eigen::Index>(g.cols()));
                            dxm.noalias() = wm * cols;
                        }
                    }
                    if (want_dx) accumulate(node.inputs.front(), std::move(dx));
                },
                [&](const MaxPool2D&) {
                    if (!want_dx) return;
                    BasicTensor<T> dx(x.shape(), T(0));
                    for (std::size_t k = 0; k < dy.size(); ++k) dx[cache.indices[k]] += dy[k];
                    accumulate(node.inputs.front(), std::move(dx));
                },
                [&](const BatchNorm&) {
                    const auto layout = bn_layout<T>(x.shape());
                    const auto& gamma = params_[pidx[0]].value;
                    const BasicTensor<T>& xhat = cache.saved[0];
                    const BasicTensor<T>& inv_std = cache.saved[1];
                    BasicTensor<T>* dgamma = param_grad(0);
                    BasicTensor<T>* dbeta = param_grad(1);
                    BasicTensor<T> dx;
                    if (want_dx) dx = BasicTensor<T>(x.shape(), T(0));
                    const double m = static_cast<double>(layout.batch * layout.inner);
                    const bool batch_stats = cache.indices.at(0) == 1u;
                    for (std::size_t c = 0; c < layout.groups; ++c) {
                        double sum_dy = 0.0, sum_dy_xhat = 0.0;
                        for (std::size_t n = 0; n < layout.batch; ++n) {
                            const std::size_t off = (n * layout.groups + c) * layout.inner;
                            for (std::size_t i2 = 0; i2 < layout.inner; ++i2) {
                                sum_dy += dy[off + i2];
                                sum_dy_xhat += static_cast<double>(dy[off + i2]) * xhat[off + i2];
                            }
                        }
                        if (dgamma) (*dgamma)[c] += static_cast<T>(sum_dy_xhat);
                        if (dbeta) (*dbeta)[c] += static_cast<T>(sum_dy);
                        if (!want_dx) continue;
                        const T gs = gamma[c] * inv_std[c];
                        for (std::size_t n = 0; n < layout.batch; ++n) {
                            const std::size_t off = (n * layout.groups + c) * layout.inner;
                            for (std::size_t i2 = 0; i2 < layout.inner; ++i2) {
                                if (batch_stats) {
                                    dx[off + i2] = static_cast<T>(
                                        gs * (dy[off + i2] - sum_dy / m - xhat[off + i2] * sum_dy_xhat / m));
                                } else {
                                    dx[off + i2] = gs * dy[off + i2];
                                }
                            }
                        }
                    }
                    if (want_dx) accumulate(node.inputs.front(), std::move(dx));
                },
                [&](const Dropout& l) {
                    if (!want_dx) return;
                    BasicTensor<T> dx = dy;
                    if (tape.mode == Mode::train && l.rate > 0.0) {
                        const BasicTensor<T>& mask = cache.saved[0];
                        for (std::size_t k = 0; k < dx.size(); ++k) dx[k] *= mask[k];
                    }
                    accumulate(node.inputs.front(), std::move(dx));
                },
                [&](const Dense& l) {
                    const auto& w = params_[pidx[0]].value;
                    ConstMatrixMap<T> xm(x.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(l.in));
                    ConstMatrixMap<T> dym(dy.data(), static_cast<Eigen::Index>(batch),
                                          static_cast<Eigen::Index>(l.out));
                    if (BasicTensor<T>* dw = param_grad(0)) {
                        MatrixMap<T> dwm(dw->data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
                        dwm.noalias() += dym.transpose() * xm;
                    }
                    if (BasicTensor<T>* db = param_grad(1)) {
                        for (std::size_t o = 0; o < l.out; ++o) {
                            T acc = 0;
                            for (std::size_t b = 0; b < batch; ++b) acc += dy[b * l.out + o];
                            (*db)[o] += acc;
                        }
                    }
                    if (want_dx) {
                        BasicTensor<T> dx(x.shape());
                        ConstMatrixMap<T> wm(w.data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
                        MatrixMap<T> dxm(dx.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(l.in));
                        dxm.noalias() = dym * wm;
                        accumulate(node.inputs.front(), std::move(dx));
                    }
                },
                [&](const Activation& l) {
                    if (!want_dx) return;
                    BasicTensor<T> dx(x.shape());
                    switch (l.kind) {
                        case ActivationKind::relu:
                            for (std::size_t k = 0; k < dx.size(); ++k) dx[k] = x[k] > T(0) ? dy[k] : T(0);
                            break;
                        case ActivationKind::sigmoid:
                            for (std::size_t k = 0; k < dx.size(); ++k) dx[k] = dy[k] * y[k] * (T(1) - y[k]);
                            break;
                        case ActivationKind::softmax: {
                            const std::size_t k = x.dim(1);
                            for (std::size_t n = 0; n < batch; ++n) {
                                const T* yn = y.data() + n * k;
                                const T* gn = dy.data() + n * k;
                                T dot = 0;
                                for (std::size_t j = 0; j < k; ++j) dot += yn[j] * gn[j];
                                for (std::size_t j = 0; j < k; ++j) dx[n * k + j] = yn[j] * (gn[j] - dot);
                            }
                            break;
                        }
                    }
                    accumulate(node.inputs.front(), std::move(dx));
                },
                [&](const Concat&) {
                    const std::size_t inner = shape_size(Shape(x.shape().begin() + 2, x.shape().end()));
                    const std::size_t out_c = y.dim(1);
                    std::size_t c0 = 0;
                    for (int k : node.inputs) {
                        const BasicTensor<T>& in =
                            k == kNetworkInput ? tape.input : tape.outputs[static_cast<std::size_t>(k)];
                        const std::size_t c = in.dim(1);
                        if (wants(k)) {
                            BasicTensor<T> dx(in.shape());
                            for (std::size_t n = 0; n < batch; ++n) {
                                std::copy_n(dy.data() + (n * out_c + c0) * inner, c * inner, dx.data() + n * c * inner);
                            }
                            accumulate(k, std::move(dx));
                        }
                        c0 += c;
                    }
                },
                [&](const Flatten&) {
                    if (!want_dx) return;
                    BasicTensor<T> dx = dy;
                    dx.reshape(x.shape());
                    accumulate(node.inputs.front(), std::move(dx));
                },
                [&](const GlobalAvgPool&) {
                    if (!want_dx) return;
                    BasicTensor<T> dx(x.shape());
                    const std::size_t plane = x.dim(2) * x.dim(3);
                    const T scale = T(1) / static_cast<T>(plane);
                    for (std::size_t k = 0; k < dy.size(); ++k) {
                        std::fill_n(dx.data() + k * plane, plane, dy[k] * scale);
                    }
                    accumulate(node.inputs.front(), std::move(dx));
                },
                [&](const Upsample& l) {
                    if (!want_dx) return;
                    BasicTensor<T> dx(x.shape(), T(0));
                    const std::size_t planes = batch * x.dim(1), h = x.dim(2), w = x.dim(3);
                    const std::size_t oh = y.dim(2), ow = y.dim(3);
                    for (std::size_t p = 0; p < planes; ++p) {
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                dx[(p * h + oy / l.factor) * w + ox / l.factor] += dy[(p * oh + oy) * ow + ox];
                            }
                        }
                    }
                    accumulate(node.inputs.front(), std::move(dx));
                },
            },
            node.layer);
    }

    if (options.input_gradient) {
        grads.input = input_grad.empty() ? BasicTensor<T>(tape.input.shape(), T(0)) : std::move(input_grad);
    }
    if (options.node_gradients) {
        for (std::size_t i = 0; i < node_grads.size(); ++i) {
            if (node_grads[i].empty()) node_grads[i] = BasicTensor<T>(tape.outputs[i].shape(), T(0));
        }
        grads.nodes = std::move(node_grads);
    }
    return grads;
}

template class Network<float>;
template class Network<double>;
template BasicTensor<float> stack_batch(const std::vector<BasicTensor<float>>&);
template BasicTensor<double> stack_batch(const std::vector<BasicTensor<double>>&);

}  // namespace sgxp
