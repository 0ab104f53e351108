#include "prilora/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "prilora/errors.hpp"

namespace prilora {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + name + "'");
}

std::string to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "linear"; }

LrSchedule lr_schedule_from_string(const std::string& name) {
    if (name == "constant") return LrSchedule::constant;
    if (name == "linear") return LrSchedule::linear;
    throw ConfigError("unknown lr schedule '" + name + "'");
}

void OptimizerConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("optimizer eps must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
    if (warmup_steps < 0) throw ConfigError("warmup steps must be non-negative");
    if (total_steps < 1) throw ConfigError("schedule length must be positive");
    if (schedule == LrSchedule::linear && warmup_steps >= total_steps) {
        throw ConfigError("warmup must end before the linear schedule does");
    }
}

double OptimizerConfig::lr_at(long step) const {
    const long s = step - 1;  // 0-based
    if (warmup_steps > 0 && s < warmup_steps) {
        return lr * static_cast<double>(s + 1) / static_cast<double>(warmup_steps);
    }
    if (schedule == LrSchedule::constant) return lr;
    const double remaining = static_cast<double>(total_steps - s) / static_cast<double>(total_steps - warmup_steps);
    return lr * std::clamp(remaining, 0.0, 1.0);
}

Optimizer::Optimizer(OptimizerConfig config, std::span<const Tensor* const> params) : config_(config) {
    config_.validate();
    if (config_.kind == OptimizerKind::adam) {
        for (const Tensor* p : params) {
            m_.push_back(Tensor::zeros(p->shape()));
            v_.push_back(Tensor::zeros(p->shape()));
        }
    }
}

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) throw DimensionError("optimizer: gradient count != parameter count");
    ++t_;
    const double lr = config_.lr_at(t_);
    const double wd = config_.weight_decay;
    if (config_.kind == OptimizerKind::sgd) {
        for (std::size_t p = 0; p < params.size(); ++p) {
            Tensor& w = *params[p];
            if (w.shape() != grads[p].shape()) throw DimensionError("optimizer: gradient shape mismatch");
            for (std::size_t i = 0; i < w.numel(); ++i) w[i] -= lr * (grads[p][i] + wd * w[i]);
        }
        return;
    }
    if (m_.size() != params.size()) throw DimensionError("optimizer: parameter list changed since construction");
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& w = *params[p];
        const Tensor& g = grads[p];
        if (w.shape() != g.shape()) throw DimensionError("optimizer: gradient shape mismatch");
        Tensor& m = m_[p];
        Tensor& v = v_[p];
        for (std::size_t i = 0; i < w.numel(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
            w[i] -= lr * (update + wd * w[i]);
        }
    }
}

void Optimizer::restore(long steps_taken, std::vector<Tensor> m, std::vector<Tensor> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) throw FormatError("optimizer state has wrong parameter count");
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i].shape() != m_[i].shape() || v[i].shape() != v_[i].shape()) {
            throw FormatError("optimizer state shape mismatch");
        }
    }
    t_ = steps_taken;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace prilora
