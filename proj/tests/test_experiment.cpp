#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "prilora/config.hpp"
#include "prilora/errors.hpp"
#include "prilora/experiment.hpp"

using namespace prilora;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("prilora-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int n = 0;
        return n;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, '\t')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

ExperimentConfig tiny(const std::string& name) {
    ExperimentConfig c;
    c.name = name;
    c.task.train_samples = 300;
    c.task.eval_samples = 100;
    c.train.steps = 80;
    c.train.eval_interval = 20;
    return c;
}

}  // namespace

TEST_CASE("config text round-trips") {
    ExperimentConfig c = tiny("roundtrip");
    c.task.kind = TaskKind::parity;
    c.plan.kind = PlanKind::explicit_list;
    c.plan.ranks = {3, 5};
    c.plan.budget_avg = 4;
    c.train.prune.ratio = 0.1;
    c.train.prune.strategy = PruneStrategy::B_cols;
    c.train.prune.ema_copy_first = true;
    c.train.optimizer.lr = 3e-4;
    c.train.optimizer.kind = OptimizerKind::sgd;
    c.train.adapter.alpha = 16.0;
    c.train.adapter.adapted = {MatrixKind::q, MatrixKind::ffn2};
    c.seeds = {4, 9, 12};

    const std::string text = serialize_config(c);
    const ExperimentConfig back = parse_config_string(text);
    CHECK(serialize_config(back) == text);
    CHECK(back.plan.ranks == c.plan.ranks);
    CHECK(back.plan.budget_avg == 4);
    CHECK(back.train.prune.ratio == 0.1);
    CHECK(back.train.optimizer.lr == 3e-4);
    CHECK(back.train.adapter.alpha == 16.0);
    CHECK(back.train.adapter.adapted == c.train.adapter.adapted);
    CHECK(back.seeds == c.seeds);
    CHECK(back.rank_plan() == c.rank_plan());

    for (const auto& key : config_keys()) {
        if (key == "ranks") continue;
        CHECK_MESSAGE(text.find(key + " = ") != std::string::npos, key);
    }
}

TEST_CASE("config defaults and comments") {
    const ExperimentConfig c = parse_config_string("# header\nversion = 1\n\nname = x   # trailing\n");
    CHECK(c.name == "x");
    CHECK(c.train.optimizer.lr == 2e-3);
    CHECK(c.train.prune.interval_steps == 40);
    CHECK(c.train.prune.ratio == 0.5);
    CHECK(c.rank_plan().ranks == std::vector<int>{2, 6});
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config_string("name = x\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_string("version = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_string("version = 1\nbogus = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_string("version = 1\nsteps = 10\nsteps = 20\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_string("version = 1\nsteps = ten\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_string("version = 1\nlr = 1e-3x\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_string("version = 1\nsteps\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_string("version = 1\nprune_strategy = magic\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_string("version = 1\nseeds =\n"), ConfigError);

    ExperimentConfig c = tiny("bad");
    c.plan.r_end = 5;
    CHECK_THROWS_AS(c.validate(), BudgetError);
    c = tiny("bad");
    c.plan.kind = PlanKind::uniform;
    c.plan.rank = 40;
    CHECK_THROWS_AS(c.validate(), RankError);
    c = tiny("bad/name");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny("bad");
    c.train.prune.ratio = 2.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("environment overrides any key") {
    const EnvLookup env = [](const std::string& key) -> std::optional<std::string> {
        if (key == "prune_ratio") return "0.25";
        if (key == "seeds") return "7,8";
        return std::nullopt;
    };
    const ExperimentConfig c = parse_config_string("version = 1\nprune_ratio = 0.5\n", env);
    CHECK(c.train.prune.ratio == 0.25);
    CHECK(c.seeds == std::vector<std::uint64_t>{7, 8});

    ::setenv("PRILORA_STEPS", "123", 1);
    const ExperimentConfig d = parse_config_string("version = 1\nsteps = 10\n", process_env());
    ::unsetenv("PRILORA_STEPS");
    CHECK(d.train.steps == 123);

    const EnvLookup broken = [](const std::string& key) -> std::optional<std::string> {
        if (key == "steps") return "many";
        return std::nullopt;
    };
    CHECK_THROWS_AS(parse_config_string("version = 1\n", broken), ConfigError);
}

TEST_CASE("list parsing") {
    CHECK(parse_double_list("0.25, 0.5,0.75") == std::vector<double>{0.25, 0.5, 0.75});
    CHECK(parse_double_list("").empty());
    CHECK(parse_seed_list("1,2,3") == std::vector<std::uint64_t>{1, 2, 3});
    CHECK_THROWS_AS(parse_seed_list("1,-2"), ConfigError);
}

TEST_CASE("mean and sample std") {
    const Stat s = mean_std({1.0, 2.0, 4.0});
    CHECK(s.mean == doctest::Approx(7.0 / 3.0));
    CHECK(s.std == doctest::Approx(std::sqrt(((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) +
                                              (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2.0)));
    CHECK(mean_std({0.7}).std == 0.0);
    CHECK(mean_std({}).mean == 0.0);
}

TEST_CASE("run writes per-seed artifacts and a reproducible summary") {
    TempDir tmp;
    RunOptions opts;
    opts.out = tmp.path;
    opts.jobs = 2;
    ExperimentConfig cfg = tiny("three");
    cfg.seeds = {1, 2, 3};
    const GroupSummary s = run_experiment(cfg, opts);
    const fs::path dir = tmp.path / "three";

    CHECK(s.completed == 3);
    for (auto seed : cfg.seeds) {
        const fs::path sd = dir / ("seed_" + std::to_string(seed));
        CHECK(fs::exists(sd / "metrics.jsonl"));
        CHECK(fs::exists(sd / "checkpoint_final.bin"));
        CHECK(fs::exists(sd / "checkpoint_best.bin"));
        CHECK(slurp(sd / "STATUS") == "complete\n");
    }
    CHECK(parse_config_string(slurp(dir / "config.txt")).seeds == cfg.seeds);

    // Independent recomputation from the raw logs.
    std::vector<double> acc, loss;
    for (auto seed : cfg.seeds) {
        const SeedResult r = seed_result_from_log(dir / ("seed_" + std::to_string(seed)) / "metrics.jsonl");
        CHECK(r.completed);
        acc.push_back(r.final_accuracy);
        loss.push_back(r.final_loss);
    }
    const double m = (acc[0] + acc[1] + acc[2]) / 3.0;
    const double sd = std::sqrt(((acc[0] - m) * (acc[0] - m) + (acc[1] - m) * (acc[1] - m) + (acc[2] - m) * (acc[2] - m)) / 2.0);
    CHECK(std::abs(s.final_accuracy.mean - m) < 1e-15);
    CHECK(std::abs(s.final_accuracy.std - sd) < 1e-15);

    const GroupSummary from_disk = read_summary_json(dir / "summary.json");
    CHECK(from_disk == s);
    std::vector<SeedResult> relog;
    for (auto seed : cfg.seeds) relog.push_back(seed_result_from_log(dir / ("seed_" + std::to_string(seed)) / "metrics.jsonl"));
    CHECK(summarize(cfg.name, relog) == s);

    const auto tsv = read_tsv(dir / "summary.tsv");
    REQUIRE(tsv.size() == 2);
    CHECK(tsv[0][3] == "mean_accuracy");
    CHECK(tsv[0][4] == "std_accuracy");

    const std::string first = slurp(dir / "summary.json");
    opts.jobs = 1;
    run_experiment(cfg, opts);
    CHECK(slurp(dir / "summary.json") == first);

    ExperimentConfig other = cfg;
    other.train.steps = 40;
    CHECK_THROWS_AS(run_experiment(other, opts), ConfigError);
}

TEST_CASE("single seed reports zero std") {
    TempDir tmp;
    RunOptions opts;
    opts.out = tmp.path;
    const GroupSummary s = run_experiment(tiny("one"), opts);
    CHECK(s.final_accuracy.std == 0.0);
    CHECK(s.final_loss.std == 0.0);
}

TEST_CASE("diverged seed leaves partial artifacts flagged incomplete") {
    TempDir tmp;
    RunOptions opts;
    opts.out = tmp.path;
    ExperimentConfig cfg = tiny("wild");
    cfg.train.optimizer.kind = OptimizerKind::sgd;
    cfg.train.optimizer.lr = 1e300;
    const GroupSummary s = run_experiment(cfg, opts);
    CHECK_FALSE(s.all_completed());
    const fs::path sd = tmp.path / "wild" / "seed_1";
    CHECK(slurp(sd / "STATUS").rfind("incomplete", 0) == 0);
    CHECK(fs::exists(sd / "checkpoint_last_good.bin"));
    CHECK_FALSE(fs::exists(sd / "checkpoint_final.bin"));
    const SeedResult r = seed_result_from_log(sd / "metrics.jsonl");
    CHECK_FALSE(r.completed);
    CHECK_FALSE(r.error.empty());
}

TEST_CASE("ratio sweep") {
    TempDir tmp;
    RunOptions opts;
    opts.out = tmp.path;
    ExperimentConfig cfg = tiny("sweep");
    CHECK_THROWS_AS(sweep_ratio(cfg, {}, opts), ConfigError);
    CHECK_THROWS_AS(sweep_ratio(cfg, {0.5, 1.5}, opts), ConfigError);

    const auto rows = sweep_ratio(cfg, {0.75, 0.25, 0.5, 0.0}, opts);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].ratio == 0.0);
    CHECK(rows[1].ratio == 0.25);
    CHECK(rows[3].ratio == 0.75);
    const auto tsv = read_tsv(tmp.path / "sweep" / "sweep.tsv");
    CHECK(tsv.size() == 5);
    CHECK(tsv[1][0] == "0");
    CHECK(tsv[2][0] == "0.25");

    ExperimentConfig baseline = tiny("baseline");
    baseline.train.prune.strategy = PruneStrategy::none;
    const GroupSummary b = run_experiment(baseline, opts);
    CHECK(b.seeds[0].final_loss == rows[0].summary.seeds[0].final_loss);
    CHECK(b.seeds[0].final_accuracy == rows[0].summary.seeds[0].final_accuracy);
}

TEST_CASE("ablation variants") {
    ExperimentConfig base = tiny("abl");
    base.seeds = {5, 6};
    const auto vs = ablation_variants(base);
    REQUIRE(vs.size() == 8);
    const std::vector<std::string> names{"full", "fixed", "inverted", "concentrated", "no_pruning",
                                         "prune_B_rows", "prune_B_cols", "random_A_cols"};
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(vs[i].name == names[i]);
        CHECK(vs[i].config.seeds == std::vector<std::uint64_t>{5});
        CHECK(vs[i].config.train.base_seed == base.train.base_seed);
    }
    CHECK(vs[0].config.rank_plan().ranks == std::vector<int>{2, 6});
    CHECK(vs[0].config.train.prune.strategy == PruneStrategy::prilora_A);
    CHECK(vs[1].config.rank_plan().ranks == std::vector<int>{4, 4});
    CHECK(vs[2].config.rank_plan().ranks == std::vector<int>{6, 2});
    CHECK(vs[3].config.rank_plan().ranks == std::vector<int>{0, 8});
    CHECK(vs[4].config.rank_plan().ranks == std::vector<int>{2, 6});
    CHECK(vs[4].config.train.prune.strategy == PruneStrategy::none);
    CHECK(vs[5].config.train.prune.strategy == PruneStrategy::B_rows);
    CHECK(vs[6].config.train.prune.strategy == PruneStrategy::B_cols);
    CHECK(vs[7].config.train.prune.strategy == PruneStrategy::random_A_cols);

    const auto shapes = base.dims().block_shapes(base.train.adapter.adapted);
    const long expect = trainable_param_count(base.rank_plan(), shapes);
    for (const auto& v : vs) CHECK(trainable_param_count(v.config.rank_plan(), shapes) == expect);

    // Deep enough that the last layer cannot hold the whole budget.
    ExperimentConfig deep = base;
    deep.layers = 12;
    deep.d_model = 16;
    deep.d_ff = 32;
    deep.plan.r_start = 4;
    deep.plan.r_end = 12;
    const auto dv = ablation_variants(deep);
    CHECK(dv[3].config.rank_plan().ranks.back() == 16);

    ExperimentConfig preset = base;
    preset.layers = 12;
    preset.plan.kind = PlanKind::preset;
    const auto pv = ablation_variants(preset);
    CHECK(pv[0].config.rank_plan().ranks == std::vector<int>{4, 5, 6, 6, 7, 8, 8, 9, 10, 10, 11, 12});
    CHECK(pv[2].config.rank_plan().ranks == std::vector<int>{12, 11, 10, 10, 9, 8, 8, 7, 6, 6, 5, 4});
    CHECK(pv[3].config.rank_plan().ranks.back() == 32);
}

TEST_CASE("ablate writes the grid and leaves the base config file alone") {
    TempDir tmp;
    const fs::path cfg_path = tmp.path / "base.cfg";
    ExperimentConfig base = tiny("grid");
    base.train.steps = 40;
    {
        std::ofstream(cfg_path) << serialize_config(base);
    }
    const std::string before = slurp(cfg_path);
    RunOptions opts;
    opts.out = tmp.path / "out";
    opts.jobs = 2;
    const auto rows = ablate(load_config(cfg_path, no_env()), opts);
    CHECK(slurp(cfg_path) == before);
    CHECK(rows.size() == 8);
    const auto tsv = read_tsv(tmp.path / "out" / "grid" / "grid.tsv");
    REQUIRE(tsv.size() == 9);
    CHECK(tsv[1][0] == "full");
    CHECK(tsv[8][0] == "random_A_cols");
    for (const auto& r : rows) CHECK(r.summary.completed == 1);
}

TEST_CASE("report exports") {
    TempDir tmp;
    RunOptions opts;
    opts.out = tmp.path / "runs";
    ExperimentConfig pruned = tiny("pruned");
    ExperimentConfig plain = tiny("plain");
    plain.train.prune.strategy = PruneStrategy::none;
    run_experiment(pruned, opts);
    run_experiment(plain, opts);

    const fs::path out = tmp.path / "report";
    const auto res = report({opts.out / "pruned", opts.out / "plain", tmp.path / "absent"}, out);
    CHECK(res.logs.size() == 2);
    REQUIRE(res.missing.size() == 1);
    CHECK(slurp(out / "missing.txt").find("absent") != std::string::npos);

    const auto traj = read_tsv(out / "pruned__seed_1" / "trajectory.tsv");
    const auto nz = read_tsv(out / "pruned__seed_1" / "nonzero.tsv");
    CHECK(traj.size() == 1 + 80);
    CHECK(traj[0].size() == 1 + 5 + 1);
    int markers = 0;
    for (std::size_t i = 1; i < nz.size(); ++i) {
        if (nz[i][2] == "1") {
            ++markers;
            CHECK(std::stod(nz[i][1]) <= 0.5);
        }
    }
    CHECK(markers == 2);

    const auto plain_traj = read_tsv(out / "plain__seed_1" / "trajectory.tsv");
    CHECK(plain_traj.size() == 1 + 80);
    for (std::size_t i = 1; i < plain_traj.size(); ++i) CHECK(plain_traj[i].back() == "0");

    const auto curves = read_tsv(out / "plain__seed_1" / "curves.tsv");
    CHECK(curves.size() == 1 + 5);
}
