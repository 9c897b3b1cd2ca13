#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgxp/core/layers.hpp"
#include "sgxp/core/tensor.hpp"

namespace sgxp {

enum class Mode { train, eval };

/// Marker for "the network input" in a node's input list.
inline constexpr int kNetworkInput = -1;

struct NodeSpec {
    std::string name;
    LayerSpec layer;
    std::vector<int> inputs;
    bool freezable = false;
};

template <typename T>
struct Parameter {
    std::string name;
    BasicTensor<T> value;
    int node = 0;
    bool freezable = false;
    bool frozen = false;
};

/// Non-trainable state (BatchNorm running statistics).
template <typename T>
struct Buffer {
    std::string name;
    BasicTensor<T> value;
    int node = 0;
};

template <typename T>
struct NodeCache {
    std::vector<BasicTensor<T>> saved;
    std::vector<std::uint32_t> indices;
};

/// Record of one forward pass: every node output plus what each op needs in reverse.
template <typename T>
struct Tape {
    Mode mode = Mode::eval;
    BasicTensor<T> input;
    std::vector<BasicTensor<T>> outputs;
    std::vector<NodeCache<T>> caches;
    bool consumed = false;
};

template <typename T>
struct ForwardResult {
    BasicTensor<T> output;
    Tape<T> tape;
};

struct BackwardOptions {
    /// Node whose output receives the seed gradient; -1 means the final node.
    int seed_node = -1;
    bool input_gradient = false;
    /// Keep the gradient w.r.t. every node output (Grad-CAM needs this).
    bool node_gradients = false;
};

template <typename T>
struct Gradients {
    /// Aligned with Network::parameters(); frozen parameters are absent.
    std::vector<std::optional<BasicTensor<T>>> params;
    BasicTensor<T> input;
    std::vector<BasicTensor<T>> nodes;
};

/// A directed acyclic graph of layers evaluated in insertion order.
template <typename T>
class Network {
public:
    Network() = default;
    explicit Network(Shape input_shape);

    /// Appends a node; inputs index earlier nodes or kNetworkInput. Shapes are checked here.
    int add(std::string name, LayerSpec layer, std::vector<int> inputs, bool freezable = false);
    /// Appends a node fed by the previous node (or the network input when empty).
    int add(std::string name, LayerSpec layer, bool freezable = false);

    /// He-uniform weights, zero biases, unit BatchNorm scale.
    void initialize(std::uint64_t seed);

    const Shape& input_shape() const noexcept { return input_shape_; }
    Shape output_shape() const;
    const Shape& node_shape(int node) const { return node_shapes_.at(static_cast<std::size_t>(node)); }
    const std::vector<NodeSpec>& nodes() const noexcept { return nodes_; }
    int node_index(const std::string& name) const;

    std::vector<Parameter<T>>& parameters() noexcept { return params_; }
    const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }
    std::vector<Buffer<T>>& buffers() noexcept { return buffers_; }
    const std::vector<Buffer<T>>& buffers() const noexcept { return buffers_; }

    std::vector<std::size_t> freezable_parameters() const;
    void set_frozen(bool frozen);
    /// Number of trainable scalars (BatchNorm running statistics excluded).
    std::size_t parameter_count() const;

    /// Node used as "last convolutional layer" by Grad-CAM; -1 when the network has no convolution.
    int feature_node() const;
    void set_feature_node(int node) { feature_node_ = node; }

    /// Batched forward pass (batch axis first). Train mode updates BatchNorm running statistics.
    ForwardResult<T> forward(const BasicTensor<T>& input, Mode mode, std::uint64_t seed = 0);
    BasicTensor<T> predict(const BasicTensor<T>& input) const;
    /// Eval-mode forward pass that keeps the tape (for explanation methods on a shared model).
    ForwardResult<T> trace(const BasicTensor<T>& input) const;

    /// Reverse pass over the tape. The tape may be replayed only once.
    Gradients<T> backward(Tape<T>& tape, const BasicTensor<T>& output_gradient,
                          const BackwardOptions& options = {}) const;

    /// Re-evaluates every node after `node` with its output replaced (eval semantics for
    /// nodes downstream). Used to probe a layer's influence on the output.
    BasicTensor<T> evaluate_from(const Tape<T>& tape, int node, const BasicTensor<T>& replacement) const;

    template <typename U>
    Network<U> cast() const {
        Network<U> out(input_shape_);
        for (const auto& n : nodes_) out.add(n.name, n.layer, n.inputs, n.freezable);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            out.parameters()[i].value = params_[i].value.template cast<U>();
            out.parameters()[i].frozen = params_[i].frozen;
        }
        for (std::size_t i = 0; i < buffers_.size(); ++i) out.buffers()[i].value = buffers_[i].value.template cast<U>();
        out.set_feature_node(feature_node_);
        return out;
    }

private:
    BasicTensor<T> run_node(std::size_t index, const std::vector<const BasicTensor<T>*>& inputs, Mode mode,
                            std::uint64_t seed, NodeCache<T>* cache, bool update_running);

    Shape input_shape_;
    std::vector<NodeSpec> nodes_;
    std::vector<Shape> node_shapes_;
    std::vector<std::vector<std::size_t>> node_params_;
    std::vector<std::vector<std::size_t>> node_buffers_;
    std::vector<Parameter<T>> params_;
    std::vector<Buffer<T>> buffers_;
    int feature_node_ = -2;
};

extern template class Network<float>;
extern template class Network<double>;

/// Stacks equally shaped samples along a new leading batch axis.
template <typename T>
BasicTensor<T> stack_batch(const std::vector<BasicTensor<T>>& samples);

}  // namespace sgxp
