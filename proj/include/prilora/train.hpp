#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prilora/checkpoint.hpp"
#include "prilora/errors.hpp"
#include "prilora/model.hpp"
#include "prilora/optimizer.hpp"
#include "prilora/prune.hpp"
#include "prilora/rank_plan.hpp"
#include "prilora/task.hpp"

namespace prilora {

struct TrainConfig {
    RankPlan plan;
    PruneConfig prune;
    OptimizerConfig optimizer;
    AdapterSettings adapter;
    int batch_size = 16;
    long steps = 500;
    long eval_interval = 50;
    std::uint64_t seed = 1;
    std::uint64_t base_seed = 1;
    /// Number of A coordinates whose value is logged after every step.
    int trajectory_samples = 0;

    void validate() const;
};

ToyModel build_model(const TrainConfig& cfg, const ModelDims& dims);

struct EvalMetrics {
    double loss = 0.0;
    /// Fraction correct for classification; 1 - MSE / Var(target) clamped
    /// to [0, 1] for regression.
    double accuracy = 0.0;
};

/// No gradients and no statistic updates; depends only on model and samples.
EvalMetrics evaluate(const ToyModel& model, const SyntheticTask& task, const std::vector<Sample>& samples);
EvalMetrics evaluate(const ToyModel& model, const SyntheticTask& task);

struct PruneEvent {
    long step = 0;
    std::string layer_id;
    PruneStrategy strategy = PruneStrategy::none;
    double ratio = 0.0;
    long zeros_written = 0;
    friend bool operator==(const PruneEvent&, const PruneEvent&) = default;
};

struct EvalPoint {
    long step = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    long nonzero_params = 0;
    long trainable_params = 0;
    std::vector<PruneEvent> prune_events;  // since the previous eval point
    friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

struct TrajectoryCoord {
    std::size_t adapter = 0;
    std::size_t row = 0;
    std::size_t col = 0;
    std::string label;
    friend bool operator==(const TrajectoryCoord&, const TrajectoryCoord&) = default;
};

struct TrajectoryRow {
    long step = 0;
    std::vector<double> values;
    bool prune_event = false;
    /// Nonzero fraction over all A entries after this step.
    double a_nonzero_fraction = 0.0;
    friend bool operator==(const TrajectoryRow&, const TrajectoryRow&) = default;
};

struct RunRecord {
    std::vector<EvalPoint> evals;
    std::vector<PruneEvent> prune_events;
    std::vector<TrajectoryCoord> coords;
    std::vector<TrajectoryRow> trajectory;
    long first_step = 1;
    long last_step = 0;
    bool completed = false;
    /// Wall time spent in training steps, evaluation excluded.
    double train_seconds = 0.0;
    std::optional<Checkpoint> final_state;
    std::optional<Checkpoint> best_state;
    long best_step = 0;

    /// Equality of everything except timing.
    bool same_trajectory(const RunRecord& other) const;
};

/// Raised when the training loss stops being finite.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, RunRecord partial, std::optional<Checkpoint> last_good)
        : NumericError(what), partial_(std::move(partial)), last_good_(std::move(last_good)) {}
    const RunRecord& partial() const noexcept { return partial_; }
    const std::optional<Checkpoint>& last_good() const noexcept { return last_good_; }

private:
    RunRecord partial_;
    std::optional<Checkpoint> last_good_;
};

struct TrainOptions {
    /// Resume from this state; training continues at ckpt.step + 1.
    const Checkpoint* resume = nullptr;
    /// Stop after this step (inclusive) while keeping the schedule of the full run.
    std::optional<long> stop_after;
    /// Called after each prune event with the model in its post-prune state.
    std::function<void(long step, const ToyModel&)> on_prune;
    /// Called after every completed step.
    std::function<void(long step, const ToyModel&)> on_step;
    /// Streaming hooks for metrics writers.
    std::function<void(const EvalPoint&)> on_eval;
    std::function<void(const TrajectoryRow&)> on_trajectory;
};

/// Per step: forward with input-norm collection, moving-average update,
/// backward into adapters and head, optimizer step, then the prune event if
/// one is due. Evaluates at step 0, every eval_interval and at the end.
RunRecord train(ToyModel& model, const SyntheticTask& task, const TrainConfig& cfg, const TrainOptions& options = {});

/// The A coordinates whose trajectory a run with this seed logs.
std::vector<TrajectoryCoord> trajectory_coords(const ToyModel& model, std::uint64_t seed, int count);

/// Step of the best eval accuracy; the earliest one on ties.
long steps_to_peak(const RunRecord& record);

/// Training-loss gradients of all trainable tensors at the current state, in
/// ToyModel::trainable() order.
std::vector<Tensor> loss_gradients(const ToyModel& model, const Batch& batch, bool classification, double* loss = nullptr);
double batch_loss(const ToyModel& model, const Batch& batch, bool classification);

/// Deterministic batch indices for a 1-based step.
std::vector<std::size_t> batch_indices(std::uint64_t seed, long step, int batch_size, std::size_t population);

}  // namespace prilora
