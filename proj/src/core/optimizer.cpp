#include "sgxp/core/optimizer.hpp"

#include <cmath>
#include <limits>

namespace sgxp {

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig config) : config_(config) {
    if (!(config_.learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
    if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
        throw ArgumentError("Adam betas must lie in [0, 1)");
    }
}

template <typename T>
void Optimizer<T>::set_learning_rate(double lr) {
    if (!(lr > 0.0)) throw ArgumentError("learning rate must be positive");
    config_.learning_rate = lr;
}

template <typename T>
void Optimizer<T>::step(std::vector<Parameter<T>>& params, const std::vector<std::optional<BasicTensor<T>>>& grads) {
    if (grads.size() != params.size()) throw ArgumentError("gradient list does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].frozen) continue;
        if (!grads[i]) throw ArgumentError("missing gradient for parameter '" + params[i].name + "'");
        if (grads[i]->shape() != params[i].value.shape()) {
            throw ArgumentError("gradient shape mismatch for parameter '" + params[i].name + "'");
        }
        if (!grads[i]->all_finite()) throw TrainingError("non-finite gradient for parameter '" + params[i].name + "'");
    }
    if (config_.kind == OptimizerKind::adam && m_.size() != params.size()) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.emplace_back(p.value.shape(), T(0));
            v_.emplace_back(p.value.shape(), T(0));
        }
    }
    ++steps_;
    const double lr = config_.learning_rate;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].frozen) continue;
        auto& w = params[i].value;
        const auto& g = *grads[i];
        if (config_.kind == OptimizerKind::sgd) {
            for (std::size_t k = 0; k < w.size(); ++k) w[k] = static_cast<T>(w[k] - lr * g[k]);
            continue;
        }
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g[k];
            const double mk = b1 * m[k] + (1.0 - b1) * gk;
            const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
            m[k] = static_cast<T>(mk);
            v[k] = static_cast<T>(vk);
            const double mhat = mk / c1;
            const double vhat = vk / c2;
            w[k] = static_cast<T>(w[k] - lr * mhat / (std::sqrt(vhat) + config_.epsilon));
        }
    }
}

template class Optimizer<float>;
template class Optimizer<double>;

PlateauSchedule::PlateauSchedule(double initial_lr, PlateauConfig config)
    : config_(config), lr_(initial_lr), best_(std::numeric_limits<double>::infinity()) {
    if (!(initial_lr > 0.0)) throw ArgumentError("learning rate must be positive");
    if (config_.patience < 1 || !(config_.factor > 0.0 && config_.factor < 1.0) || config_.min_lr < 0.0) {
        throw ArgumentError("invalid plateau schedule configuration");
    }
}

double PlateauSchedule::update(double val_loss) {
    if (val_loss < best_ - config_.min_delta) {
        best_ = val_loss;
        wait_ = 0;
        return lr_;
    }
    if (++wait_ >= config_.patience) {
        const double reduced = std::max(lr_ * config_.factor, config_.min_lr);
        if (reduced < lr_) {
            lr_ = reduced;
            ++reductions_;
        }
        wait_ = 0;
    }
    return lr_;
}

}  // namespace sgxp
