#include "prilora/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "prilora/errors.hpp"

namespace prilora {

namespace {

constexpr std::uint64_t kBatchStream = 0xBA7C;
constexpr std::uint64_t kPruneStream = 0x9A0E;
constexpr std::uint64_t kTrajectoryStream = 0x7AA7;
constexpr std::size_t kEvalChunk = 256;

bool tracks_input_norm(PruneStrategy s) { return s == PruneStrategy::prilora_A; }
bool tracks_latent_norm(PruneStrategy s) { return s == PruneStrategy::B_rows || s == PruneStrategy::B_cols; }

double a_nonzero_fraction(const ToyModel& model) {
    std::size_t total = 0, nonzero = 0;
    for (const auto& a : model.adapters) {
        total += a.A.numel();
        nonzero += count_nonzero(a.A);
    }
    return total ? static_cast<double>(nonzero) / static_cast<double>(total) : 0.0;
}

}  // namespace

std::vector<TrajectoryCoord> trajectory_coords(const ToyModel& model, std::uint64_t seed, int count) {
    std::vector<TrajectoryCoord> coords;
    if (model.adapters.empty() || count <= 0) return coords;
    Rng rng(seed, kTrajectoryStream);
    for (int k = 0; k < count; ++k) {
        TrajectoryCoord c;
        c.adapter = static_cast<std::size_t>(rng.below(model.adapters.size()));
        const auto& A = model.adapters[c.adapter].A;
        c.row = static_cast<std::size_t>(rng.below(A.rows()));
        c.col = static_cast<std::size_t>(rng.below(A.cols()));
        c.label = model.adapters[c.adapter].frozen_ref + ".A[" + std::to_string(c.row) + "," + std::to_string(c.col) + "]";
        coords.push_back(std::move(c));
    }
    return coords;
}

void TrainConfig::validate() const {
    plan.validate();
    prune.validate();
    optimizer.validate();
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (steps < 1) throw ConfigError("step count must be positive");
    if (eval_interval < 1) throw ConfigError("eval interval must be positive");
    if (trajectory_samples < 0) throw ConfigError("trajectory sample count must be non-negative");
    if (!(adapter.init_std > 0.0)) throw ConfigError("adapter init std must be > 0");
    if (adapter.adapted.empty()) throw ConfigError("at least one matrix kind must be adapted");
}

ToyModel build_model(const TrainConfig& cfg, const ModelDims& dims) {
    cfg.validate();
    return build_model(ModelInit{dims, cfg.plan, cfg.adapter, cfg.prune, cfg.base_seed, cfg.seed});
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, long step, int batch_size, std::size_t population) {
    if (population == 0) throw ParameterError("cannot sample a batch from an empty split");
    Rng rng = Rng(seed, kBatchStream).fork(static_cast<std::uint64_t>(step));
    std::vector<std::size_t> idx(static_cast<std::size_t>(batch_size));
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(population));
    return idx;
}

std::vector<Tensor> loss_gradients(const ToyModel& model, const Batch& batch, bool classification, double* loss) {
    ad::Graph g;
    const ForwardPass fp = forward_pass(g, model, batch, classification);
    if (loss) *loss = g.value(fp.loss)[0];
    g.backward(fp.loss);
    std::vector<Tensor> grads;
    grads.reserve(fp.params.size());
    for (auto v : fp.params) grads.push_back(g.grad(v));
    return grads;
}

double batch_loss(const ToyModel& model, const Batch& batch, bool classification) {
    ad::Graph g;
    return g.value(forward_pass(g, model, batch, classification).loss)[0];
}

EvalMetrics evaluate(const ToyModel& model, const SyntheticTask& task, const std::vector<Sample>& samples) {
    if (samples.empty()) throw ParameterError("evaluate: empty split");
    const bool cls = task.is_classification();
    double loss_sum = 0.0;
    std::size_t correct = 0;
    double target_mean = 0.0;
    for (const auto& s : samples) target_mean += s.target;
    target_mean /= static_cast<double>(samples.size());
    double target_var = 0.0;

    for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
        const std::size_t end = std::min(samples.size(), start + kEvalChunk);
        std::vector<std::size_t> idx(end - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        const Batch batch = make_batch(samples, idx);
        ad::Graph g;
        const ForwardPass fp = forward_pass(g, model, batch, cls);
        loss_sum += g.value(fp.loss)[0] * static_cast<double>(idx.size());
        const Tensor& out = g.value(fp.output);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (cls) {
                auto r = out.row(i);
                const auto pred = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
                if (pred == batch.labels[i]) ++correct;
            } else {
                const double dt = batch.targets[i] - target_mean;
                target_var += dt * dt;
            }
        }
    }
    EvalMetrics m;
    m.loss = loss_sum / static_cast<double>(samples.size());
    if (cls) {
        m.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    } else {
        target_var /= static_cast<double>(samples.size());
        m.accuracy = target_var > 0.0 ? std::clamp(1.0 - m.loss / target_var, 0.0, 1.0) : 0.0;
    }
    return m;
}

EvalMetrics evaluate(const ToyModel& model, const SyntheticTask& task) { return evaluate(model, task, task.eval); }

bool RunRecord::same_trajectory(const RunRecord& o) const {
    return evals == o.evals && prune_events == o.prune_events && coords == o.coords && trajectory == o.trajectory &&
           first_step == o.first_step && last_step == o.last_step && completed == o.completed &&
           final_state == o.final_state && best_state == o.best_state && best_step == o.best_step;
}

RunRecord train(ToyModel& model, const SyntheticTask& task, const TrainConfig& cfg, const TrainOptions& options) {
    cfg.validate();
    if (model.plan.ranks != cfg.plan.ranks) throw ConfigError("model was built for a different rank plan");
    if (task.output_width() != model.dims.outputs) throw ConfigError("task output width does not match the model head");
    if (task.config.seq_len != model.dims.seq_len || task.config.vocab > model.dims.vocab) {
        throw ConfigError("task sequence shape does not match the model");
    }

    OptimizerConfig ocfg = cfg.optimizer;
    ocfg.total_steps = cfg.steps;
    const auto params_const = model.trainable();
    std::vector<const Tensor*> const_view(params_const.begin(), params_const.end());
    Optimizer optimizer(ocfg, const_view);

    RunRecord rec;
    if (options.resume) {
        restore(model, optimizer, *options.resume);
        rec.first_step = options.resume->step + 1;
    }
    const long last = options.stop_after ? std::min(*options.stop_after, cfg.steps) : cfg.steps;
    rec.coords = trajectory_coords(model, cfg.seed, cfg.trajectory_samples);

    const bool cls = task.is_classification();
    const auto trainable_count = model.adapter_param_count();
    const Rng prune_root(cfg.seed, kPruneStream);
    std::vector<PruneEvent> pending;
    std::optional<Checkpoint> last_good;
    double best_accuracy = -1.0;

    auto record_eval = [&](long step) {
        const EvalMetrics m = evaluate(model, task);
        EvalPoint p{step, m.loss, m.accuracy, nonzero_param_count(model.adapters), trainable_count, std::move(pending)};
        pending.clear();
        if (options.on_eval) options.on_eval(p);
        rec.evals.push_back(std::move(p));
        last_good = capture(model, optimizer, step, cfg.seed);
        if (m.accuracy > best_accuracy) {
            best_accuracy = m.accuracy;
            rec.best_step = step;
            rec.best_state = last_good;
        }
    };

    if (rec.first_step == 1) record_eval(0);

    using Clock = std::chrono::steady_clock;
    for (long step = rec.first_step; step <= last; ++step) {
        const auto t0 = Clock::now();
        const auto idx = batch_indices(cfg.seed, step, cfg.batch_size, task.train.size());
        const Batch batch = make_batch(task.train, idx);

        ad::Graph g;
        const ForwardPass fp = forward_pass(g, model, batch, cls);
        const double loss = g.value(fp.loss)[0];
        if (!std::isfinite(loss)) {
            rec.last_step = step - 1;
            throw DivergenceError("training loss became non-finite at step " + std::to_string(step), rec, last_good);
        }

        if (tracks_input_norm(cfg.prune.strategy)) {
            for (std::size_t a = 0; a < model.adapters.size(); ++a) {
                ema_update_inplace(model.input_ema[a], batch_input_norm(g.value(fp.adapter_input[a])));
            }
        }
        if (tracks_latent_norm(cfg.prune.strategy)) {
            for (std::size_t a = 0; a < model.adapters.size(); ++a) {
                ema_update_inplace(model.latent_ema[a], batch_input_norm(g.value(fp.adapter_latent[a])));
            }
        }

        g.backward(fp.loss);
        std::vector<Tensor> grads;
        grads.reserve(fp.params.size());
        for (auto v : fp.params) grads.push_back(g.grad(v));
        const auto params = model.trainable();
        optimizer.step(params, grads);

        const bool prune_now = should_prune(step, cfg.prune);
        if (prune_now) {
            for (std::size_t a = 0; a < model.adapters.size(); ++a) {
                auto& adapter = model.adapters[a];
                long written = 0;
                if (cfg.prune.strategy == PruneStrategy::prilora_A) {
                    written = prune_adapter_A(adapter, model.input_ema[a], cfg.prune.ratio, step);
                } else {
                    Rng rng = prune_root.fork(static_cast<std::uint64_t>(step) * 4096u + a);
                    written = ablation_prune(adapter, model.latent_ema[a], cfg.prune, rng);
                }
                PruneEvent ev{step, adapter.frozen_ref, cfg.prune.strategy, cfg.prune.ratio, written};
                rec.prune_events.push_back(ev);
                pending.push_back(std::move(ev));
            }
        }
        rec.train_seconds += std::chrono::duration<double>(Clock::now() - t0).count();

        if (prune_now && options.on_prune) options.on_prune(step, model);
        if (!rec.coords.empty()) {
            TrajectoryRow row{step, {}, prune_now, a_nonzero_fraction(model)};
            for (const auto& c : rec.coords) row.values.push_back(model.adapters[c.adapter].A(c.row, c.col));
            if (options.on_trajectory) options.on_trajectory(row);
            rec.trajectory.push_back(std::move(row));
        }
        rec.last_step = step;
        if (options.on_step) options.on_step(step, model);
        if (step % cfg.eval_interval == 0 || step == cfg.steps) record_eval(step);
    }

    rec.completed = rec.last_step == cfg.steps;
    rec.final_state = capture(model, optimizer, rec.last_step, cfg.seed);
    return rec;
}

long steps_to_peak(const RunRecord& record) {
    if (record.evals.empty()) throw ParameterError("steps_to_peak: record has no eval points");
    const EvalPoint* best = &record.evals.front();
    for (const auto& e : record.evals) {
        if (e.accuracy > best->accuracy) best = &e;
    }
    return best->step;
}

}  // namespace prilora
