#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include "prilora/checkpoint.hpp"
#include "prilora/errors.hpp"
#include "prilora/model.hpp"
#include "prilora/optimizer.hpp"
#include "prilora/task.hpp"
#include "prilora/train.hpp"

using namespace prilora;

namespace {

ModelDims small_dims(const SyntheticTask& task) {
    ModelDims d;
    d.layers = 2;
    d.d_model = 32;
    d.heads = 2;
    d.d_ff = 64;
    d.vocab = task.config.vocab;
    d.seq_len = task.config.seq_len;
    d.outputs = task.output_width();
    return d;
}

TrainConfig small_train(long steps) {
    TrainConfig c;
    c.plan = linear_plan(2, 2, 6);
    c.optimizer.lr = 2e-3;
    c.steps = steps;
    c.eval_interval = 20;
    return c;
}

TaskConfig small_task(int train = 400, int eval = 200) {
    TaskConfig t;
    t.train_samples = train;
    t.eval_samples = eval;
    return t;
}

std::uint64_t hash_frozen(const ToyModel& m) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const Tensor& t) {
        for (double v : t.data()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h = (h ^ bits) * 1099511628211ULL;
        }
    };
    mix(m.token_embedding);
    mix(m.position_embedding);
    for (const auto& block : m.blocks)
        for (const auto& lin : block) {
            mix(lin.weight);
            if (lin.bias) mix(*lin.bias);
        }
    return h;
}

}  // namespace

TEST_CASE("synthetic tasks") {
    for (auto kind : {TaskKind::majority, TaskKind::parity, TaskKind::regression}) {
        TaskConfig cfg = small_task();
        cfg.kind = kind;
        const SyntheticTask a = make_task(cfg);
        const SyntheticTask b = make_task(cfg);
        CHECK(a.train.size() == 400);
        CHECK(a.eval.size() == 200);
        std::set<std::vector<int>> seen;
        for (const auto& s : a.train) seen.insert(s.tokens);
        for (const auto& s : a.eval) CHECK(seen.count(s.tokens) == 0);
        for (std::size_t i = 0; i < a.train.size(); ++i) {
            CHECK(a.train[i].tokens == b.train[i].tokens);
            CHECK(a.train[i].label == b.train[i].label);
            CHECK(a.train[i].target == b.train[i].target);
        }
    }
    const SyntheticTask m = make_task(small_task());
    for (const auto& s : m.train) {
        int odd = 0;
        for (int t : s.tokens) odd += t % 2;
        const int even = static_cast<int>(s.tokens.size()) - odd;
        CHECK(s.label == (odd > even ? 1 : 0));
    }
    TaskConfig parity = small_task();
    parity.kind = TaskKind::parity;
    for (const auto& s : make_task(parity).train) {
        int markers = 0;
        for (int t : s.tokens) markers += t == 0 ? 1 : 0;
        CHECK(s.label == markers % 2);
    }
}

TEST_CASE("build_model") {
    const SyntheticTask task = make_task(small_task());
    TrainConfig cfg = small_train(10);
    cfg.plan = uniform_plan(2, 8);
    const ToyModel m = build_model(cfg, small_dims(task));
    CHECK(m.adapters.size() == 12);

    cfg.plan = concentrated_plan(2, 8);
    const ToyModel c = build_model(cfg, small_dims(task));
    CHECK(c.adapters.size() == 6);
    for (const auto& s : c.slots) CHECK(s.layer == 1);
    for (auto k : kAllMatrixKinds) CHECK(c.adapter_index[0][static_cast<std::size_t>(k)] == -1);

    cfg.plan = uniform_plan(3, 4);
    CHECK_THROWS_AS(build_model(cfg, small_dims(task)), ConfigError);

    cfg.plan = uniform_plan(2, 4);
    cfg.adapter.adapted = {MatrixKind::q, MatrixKind::v};
    CHECK(build_model(cfg, small_dims(task)).adapters.size() == 4);

    cfg = small_train(10);
    const ToyModel x = build_model(cfg, small_dims(task));
    const ToyModel y = build_model(cfg, small_dims(task));
    CHECK(evaluate(x, task).loss == evaluate(y, task).loss);
    cfg.seed = 2;
    CHECK(hash_frozen(build_model(cfg, small_dims(task))) == hash_frozen(x));
}

TEST_CASE("evaluate") {
    SUBCASE("untrained model sits at chance on a balanced task") {
        const SyntheticTask task = make_task(small_task(400, 1000));
        const ToyModel m = build_model(small_train(10), small_dims(task));
        const EvalMetrics e = evaluate(m, task);
        CHECK(std::abs(e.accuracy - 0.5) <= 0.05);
        CHECK(e.loss >= 0.0);
        CHECK(e.loss == doctest::Approx(std::log(2.0)));
    }
    SUBCASE("a four-sample task is memorized") {
        const SyntheticTask task = make_task(small_task(4, 50));
        TrainConfig cfg = small_train(300);
        cfg.batch_size = 4;
        cfg.optimizer.lr = 1e-2;
        ToyModel m = build_model(cfg, small_dims(task));
        train(m, task, cfg);
        const EvalMetrics e = evaluate(m, task, task.train);
        CHECK(e.accuracy == 1.0);
        CHECK(e.loss >= 0.0);
    }
    SUBCASE("empty split") {
        const SyntheticTask task = make_task(small_task());
        const ToyModel m = build_model(small_train(10), small_dims(task));
        CHECK_THROWS_AS(evaluate(m, task, {}), ParameterError);
    }
}

TEST_CASE("steps_to_peak") {
    auto record = [](std::vector<double> acc, std::vector<long> steps) {
        RunRecord r;
        for (std::size_t i = 0; i < acc.size(); ++i) r.evals.push_back(EvalPoint{steps[i], 0.0, acc[i], 0, 0, {}});
        return r;
    };
    CHECK(steps_to_peak(record({0.9, 0.95, 0.95, 0.93}, {10, 20, 30, 40})) == 20);
    CHECK(steps_to_peak(record({0.1, 0.2, 0.3}, {5, 10, 15})) == 15);
    CHECK(steps_to_peak(record({0.4}, {7})) == 7);
    CHECK_THROWS_AS(steps_to_peak(RunRecord{}), ParameterError);
}

TEST_CASE("optimizer updates") {
    SUBCASE("adam first step is lr * sign(g)") {
        Tensor p = Tensor::vector({1.0, -1.0, 0.0});
        OptimizerConfig cfg;
        cfg.lr = 0.1;
        cfg.eps = 1e-12;
        cfg.schedule = LrSchedule::constant;
        std::vector<const Tensor*> view{&p};
        Optimizer opt(cfg, view);
        std::vector<Tensor*> params{&p};
        const std::vector<Tensor> g{Tensor::vector({0.5, -2.0, 3.0})};
        opt.step(params, g);
        CHECK(p[0] == doctest::Approx(0.9));
        CHECK(p[1] == doctest::Approx(-0.9));
        CHECK(p[2] == doctest::Approx(-0.1));
    }
    SUBCASE("linear schedule with warmup") {
        OptimizerConfig cfg;
        cfg.lr = 1.0;
        cfg.total_steps = 10;
        CHECK(cfg.lr_at(1) == 1.0);
        CHECK(cfg.lr_at(10) == doctest::Approx(0.1));
        cfg.warmup_steps = 2;
        CHECK(cfg.lr_at(1) == 0.5);
        CHECK(cfg.lr_at(2) == 1.0);
        CHECK(cfg.lr_at(3) == 1.0);
        CHECK(cfg.lr_at(10) == doctest::Approx(1.0 / 8.0));
    }
    SUBCASE("sgd with decoupled decay") {
        Tensor p = Tensor::vector({2.0});
        OptimizerConfig cfg;
        cfg.kind = OptimizerKind::sgd;
        cfg.lr = 0.5;
        cfg.weight_decay = 0.1;
        cfg.schedule = LrSchedule::constant;
        std::vector<const Tensor*> view{&p};
        Optimizer opt(cfg, view);
        std::vector<Tensor*> params{&p};
        opt.step(params, std::vector<Tensor>{Tensor::vector({1.0})});
        CHECK(p[0] == doctest::Approx(2.0 - 0.5 * (1.0 + 0.2)));
    }
}

TEST_CASE("training loop") {
    const SyntheticTask task = make_task(small_task());
    const TrainConfig cfg = small_train(120);

    SUBCASE("deterministic and base stays frozen") {
        ToyModel a = build_model(cfg, small_dims(task));
        const auto before = hash_frozen(a);
        const RunRecord ra = train(a, task, cfg);
        CHECK(hash_frozen(a) == before);
        ToyModel b = build_model(cfg, small_dims(task));
        const RunRecord rb = train(b, task, cfg);
        CHECK(ra.same_trajectory(rb));
        CHECK(ra.completed);
        CHECK(ra.evals.front().step == 0);
        CHECK(ra.evals.back().step == 120);
        CHECK(ra.prune_events.size() == 3 * a.adapters.size());
    }

    SUBCASE("ratio zero equals no pruning, bitwise") {
        TrainConfig zero = cfg;
        zero.prune.ratio = 0.0;
        TrainConfig none = cfg;
        none.prune.strategy = PruneStrategy::none;
        none.prune.ratio = 0.0;
        ToyModel a = build_model(zero, small_dims(task));
        ToyModel b = build_model(none, small_dims(task));
        const RunRecord ra = train(a, task, zero);
        const RunRecord rb = train(b, task, none);
        for (std::size_t i = 0; i < a.adapters.size(); ++i) {
            CHECK(a.adapters[i].A == b.adapters[i].A);
            CHECK(a.adapters[i].B == b.adapters[i].B);
        }
        CHECK(a.head_weight == b.head_weight);
        CHECK(ra.evals.back().loss == rb.evals.back().loss);
        CHECK(rb.prune_events.empty());
        for (const auto& e : ra.prune_events) CHECK(e.zeros_written == 0);
    }

    SUBCASE("prune events leave half of every A row at zero") {
        ToyModel m = build_model(cfg, small_dims(task));
        int events = 0;
        TrainOptions opts;
        opts.on_prune = [&](long, const ToyModel& model) {
            ++events;
            for (const auto& a : model.adapters)
                for (std::size_t i = 0; i < a.A.rows(); ++i) {
                    auto row = a.A.row(i);
                    CHECK(static_cast<std::size_t>(std::count(row.begin(), row.end(), 0.0)) >= a.A.cols() / 2);
                }
            CHECK(4 * nonzero_param_count(model.adapters) <= 3 * model.adapter_param_count());
        };
        train(m, task, cfg, opts);
        CHECK(events == 3);
    }

    SUBCASE("gradients reach adapters and head but never the base") {
        ToyModel m = build_model(cfg, small_dims(task));
        TrainConfig few = cfg;
        few.steps = 5;
        train(m, task, few);
        const Batch batch = make_batch(task.train, batch_indices(1, 1, 16, task.train.size()));
        ad::Graph g;
        const ForwardPass fp = forward_pass(g, m, batch, true);
        g.backward(fp.loss);
        for (auto v : fp.frozen) CHECK(count_nonzero(g.grad(v)) == 0);
        for (auto v : fp.params) CHECK(count_nonzero(g.grad(v)) > 0);
    }

    SUBCASE("checkpoint round-trip and bit-exact resume") {
        ToyModel full = build_model(cfg, small_dims(task));
        const RunRecord whole = train(full, task, cfg);

        ToyModel first = build_model(cfg, small_dims(task));
        TrainOptions stop;
        stop.stop_after = 50;
        const RunRecord part = train(first, task, cfg, stop);
        REQUIRE(part.final_state);
        CHECK_FALSE(part.completed);

        std::stringstream s1;
        save_checkpoint(s1, *part.final_state);
        const Checkpoint loaded = load_checkpoint(s1);
        CHECK(loaded == *part.final_state);
        std::stringstream s2;
        save_checkpoint(s2, loaded);
        CHECK(s2.str() == s1.str());

        ToyModel second = build_model(cfg, small_dims(task));
        TrainOptions resume;
        resume.resume = &loaded;
        const RunRecord rest = train(second, task, cfg, resume);
        CHECK(rest.first_step == 51);
        CHECK(*rest.final_state == *whole.final_state);
        CHECK(rest.evals.back() == whole.evals.back());

        std::stringstream bad("XXXX");
        CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
    }

    SUBCASE("divergence aborts with the last good state") {
        TrainConfig wild = cfg;
        wild.optimizer.kind = OptimizerKind::sgd;
        wild.optimizer.lr = 1e300;
        wild.optimizer.schedule = LrSchedule::constant;
        ToyModel m = build_model(wild, small_dims(task));
        try {
            train(m, task, wild);
            FAIL("expected divergence");
        } catch (const DivergenceError& e) {
            CHECK(e.last_good().has_value());
            CHECK_FALSE(e.partial().completed);
        }
    }
}

TEST_CASE("train rejects mismatched inputs") {
    const SyntheticTask task = make_task(small_task());
    TrainConfig cfg = small_train(10);
    ToyModel m = build_model(cfg, small_dims(task));
    TrainConfig other = cfg;
    other.plan = uniform_plan(2, 4);
    CHECK_THROWS_AS(train(m, task, other), ConfigError);
    TrainConfig bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(m, task, bad), ConfigError);
}
