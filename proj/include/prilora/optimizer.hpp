#pragma once

#include <span>
#include <string>
#include <vector>

#include "prilora/tensor.hpp"

namespace prilora {

enum class OptimizerKind { sgd, adam };
enum class LrSchedule { constant, linear };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);
std::string to_string(LrSchedule s);
LrSchedule lr_schedule_from_string(const std::string& name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Decoupled weight decay, applied as p -= lr * weight_decay * p.
    double weight_decay = 0.0;
    LrSchedule schedule = LrSchedule::linear;
    long warmup_steps = 0;
    /// Length of the linear schedule; the rate reaches zero at this step.
    long total_steps = 1;

    void validate() const;
    /// Learning rate for the 1-based step t.
    double lr_at(long step) const;
};

/// SGD or Adam over a fixed list of parameter tensors. Moment buffers are
/// only ever touched by step(); pruning never resets them.
class Optimizer {
public:
    Optimizer() = default;
    Optimizer(OptimizerConfig config, std::span<const Tensor* const> params);

    /// Applies one update using gradients aligned with the parameter list.
    void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

    const OptimizerConfig& config() const noexcept { return config_; }
    long steps_taken() const noexcept { return t_; }
    const std::vector<Tensor>& first_moment() const noexcept { return m_; }
    const std::vector<Tensor>& second_moment() const noexcept { return v_; }

    /// Restores buffers from a checkpoint; shapes must match.
    void restore(long steps_taken, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    OptimizerConfig config_;
    long t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace prilora
