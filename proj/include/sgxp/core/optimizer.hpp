#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "sgxp/core/network.hpp"

namespace sgxp {

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
};

/// Adam with bias correction, or plain SGD. Moments are allocated on the first step.
template <typename T>
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config = {});

    /// Updates every unfrozen parameter in place. Throws TrainingError on a non-finite gradient
    /// before touching any parameter.
    void step(std::vector<Parameter<T>>& params, const std::vector<std::optional<BasicTensor<T>>>& grads);

    double learning_rate() const noexcept { return config_.learning_rate; }
    void set_learning_rate(double lr);
    std::size_t steps() const noexcept { return steps_; }
    const OptimizerConfig& config() const noexcept { return config_; }

private:
    OptimizerConfig config_;
    std::size_t steps_ = 0;
    std::vector<BasicTensor<T>> m_, v_;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

struct PlateauConfig {
    int patience = 3;
    double factor = 0.5;
    double min_delta = 0.0;
    double min_lr = 1e-6;
};

/// Halves the learning rate once the monitored loss has failed to improve on its best value
/// for `patience` consecutive epochs; the wait counter restarts after each reduction.
class PlateauSchedule {
public:
    PlateauSchedule(double initial_lr, PlateauConfig config = {});

    /// Feed one epoch's validation loss; returns the learning rate for the next epoch.
    double update(double val_loss);

    double learning_rate() const noexcept { return lr_; }
    int reductions() const noexcept { return reductions_; }
    double best() const noexcept { return best_; }

private:
    PlateauConfig config_;
    double lr_;
    double best_;
    int wait_ = 0;
    int reductions_ = 0;
};

}  // namespace sgxp
