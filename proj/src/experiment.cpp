#include "prilora/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "prilora/errors.hpp"

namespace prilora {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string short_double(double v) {
    for (int prec = 1; prec <= 17; ++prec) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
}

json plan_json(const RankPlan& plan) { return json(plan.ranks); }

json event_json(const PruneEvent& e) {
    return {{"step", e.step},
            {"layer", e.layer_id},
            {"strategy", to_string(e.strategy)},
            {"ratio", e.ratio},
            {"zeros_written", e.zeros_written}};
}

json eval_json(const EvalPoint& p) {
    json events = json::array();
    for (const auto& e : p.prune_events) events.push_back(event_json(e));
    return {{"type", "eval"},
            {"step", p.step},
            {"loss", p.loss},
            {"accuracy", p.accuracy},
            {"nonzero_params", p.nonzero_params},
            {"trainable_params", p.trainable_params},
            {"prune_events", events}};
}

json trajectory_json(const TrajectoryRow& r) {
    return {{"type", "trajectory"},
            {"step", r.step},
            {"values", r.values},
            {"prune_event", r.prune_event},
            {"a_nonzero_fraction", r.a_nonzero_fraction}};
}

// Shared by the in-memory and the log-reading paths so both agree exactly.
SeedResult seed_result_from_evals(std::uint64_t seed, const std::vector<EvalPoint>& evals, bool completed) {
    SeedResult r;
    r.seed = seed;
    r.completed = completed;
    if (evals.empty()) return r;
    const EvalPoint& last = evals.back();
    r.final_loss = last.loss;
    r.final_accuracy = last.accuracy;
    r.nonzero_params = last.nonzero_params;
    r.trainable_params = last.trainable_params;
    RunRecord tmp;
    tmp.evals = evals;
    r.steps_to_peak = steps_to_peak(tmp);
    for (const auto& e : evals)
        if (e.step == r.steps_to_peak) {
            r.best_accuracy = e.accuracy;
            break;
        }
    return r;
}

struct ParsedLog {
    json header;
    std::vector<EvalPoint> evals;
    std::vector<TrajectoryRow> trajectory;
    std::optional<json> end;
};

ParsedLog parse_log(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read " + path.string());
    ParsedLog log;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            // A run killed mid-write can leave a torn last line.
            if (in.peek() == EOF) break;
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            const std::string type = j.at("type").get<std::string>();
            if (type == "header") {
                log.header = j;
            } else if (type == "eval") {
                EvalPoint p;
                p.step = j.at("step").get<long>();
                p.loss = j.at("loss").get<double>();
                p.accuracy = j.at("accuracy").get<double>();
                p.nonzero_params = j.at("nonzero_params").get<long>();
                p.trainable_params = j.at("trainable_params").get<long>();
                for (const auto& e : j.at("prune_events")) {
                    p.prune_events.push_back(PruneEvent{e.at("step").get<long>(), e.at("layer").get<std::string>(),
                                                        prune_strategy_from_string(e.at("strategy").get<std::string>()),
                                                        e.at("ratio").get<double>(), e.at("zeros_written").get<long>()});
                }
                log.evals.push_back(std::move(p));
            } else if (type == "trajectory") {
                TrajectoryRow r;
                r.step = j.at("step").get<long>();
                r.values = j.at("values").get<std::vector<double>>();
                r.prune_event = j.at("prune_event").get<bool>();
                r.a_nonzero_fraction = j.at("a_nonzero_fraction").get<double>();
                log.trajectory.push_back(std::move(r));
            } else if (type == "end") {
                log.end = j;
            } else {
                throw FormatError("unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (log.header.is_null()) throw FormatError(path.string() + ": missing header record");
    return log;
}

class MetricsWriter {
public:
    explicit MetricsWriter(const fs::path& path) : out_(path, std::ios::trunc) {
        if (!out_) throw Error("cannot write " + path.string());
    }
    void write(const json& j) {
        out_ << j.dump() << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

struct SeedJob {
    const ExperimentConfig* cfg;
    const SyntheticTask* task;
    std::uint64_t seed;
    fs::path dir;
};

SeedResult run_seed(const SeedJob& job) {
    const ExperimentConfig& cfg = *job.cfg;
    fs::remove_all(job.dir);
    fs::create_directories(job.dir);
    write_file(job.dir / "STATUS", "running\n");

    const TrainConfig tc = cfg.train_config(job.seed);
    ToyModel model = build_model(tc, cfg.dims());
    MetricsWriter log(job.dir / "metrics.jsonl");

    json coords = json::array();
    for (const auto& c : trajectory_coords(model, tc.seed, tc.trajectory_samples)) coords.push_back(c.label);
    log.write({{"type", "header"},
               {"version", kConfigVersion},
               {"name", cfg.name},
               {"seed", job.seed},
               {"plan_kind", to_string(tc.plan.kind)},
               {"plan", plan_json(tc.plan)},
               {"strategy", to_string(tc.prune.strategy)},
               {"ratio", tc.prune.ratio},
               {"interval", tc.prune.interval_steps},
               {"steps", tc.steps},
               {"trainable_params", model.adapter_param_count()},
               {"coords", coords}});

    TrainOptions opts;
    opts.on_eval = [&](const EvalPoint& p) { log.write(eval_json(p)); };
    opts.on_trajectory = [&](const TrajectoryRow& r) { log.write(trajectory_json(r)); };

    auto finish_incomplete = [&](const RunRecord& partial, const std::string& what) {
        log.write({{"type", "end"},
                   {"completed", false},
                   {"last_step", partial.last_step},
                   {"train_seconds", partial.train_seconds},
                   {"error", what}});
        write_file(job.dir / "STATUS", "incomplete: " + what + "\n");
        SeedResult r = seed_result_from_evals(job.seed, partial.evals, false);
        r.error = what;
        return r;
    };

    try {
        const RunRecord rec = train(model, *job.task, tc, opts);
        if (rec.final_state) save_checkpoint(job.dir / "checkpoint_final.bin", *rec.final_state);
        if (rec.best_state) save_checkpoint(job.dir / "checkpoint_best.bin", *rec.best_state);
        log.write({{"type", "end"},
                   {"completed", rec.completed},
                   {"last_step", rec.last_step},
                   {"best_step", rec.best_step},
                   {"train_seconds", rec.train_seconds}});
        write_file(job.dir / "STATUS", rec.completed ? "complete\n" : "incomplete\n");
        return seed_result_from_evals(job.seed, rec.evals, rec.completed);
    } catch (const DivergenceError& e) {
        if (e.last_good()) save_checkpoint(job.dir / "checkpoint_last_good.bin", *e.last_good());
        return finish_incomplete(e.partial(), e.what());
    }
}

struct GroupJob {
    ExperimentConfig cfg;
    fs::path dir;
};

void write_group_files(const GroupSummary& s, const fs::path& dir) {
    write_file(dir / "summary.json", summary_json(s));
    std::ostringstream tsv;
    tsv << "name\tseeds\tcompleted\tmean_accuracy\tstd_accuracy\tmean_loss\tstd_loss\tmean_best_accuracy\tstd_best_accuracy\n";
    tsv << s.name << '\t' << s.seeds.size() << '\t' << s.completed << '\t' << short_double(s.final_accuracy.mean) << '\t'
        << short_double(s.final_accuracy.std) << '\t' << short_double(s.final_loss.mean) << '\t'
        << short_double(s.final_loss.std) << '\t' << short_double(s.best_accuracy.mean) << '\t'
        << short_double(s.best_accuracy.std) << '\n';
    write_file(dir / "summary.tsv", tsv.str());
}

std::vector<GroupSummary> run_groups(const std::vector<GroupJob>& groups, const RunOptions& opts) {
    for (const auto& g : groups) g.cfg.validate();

    // Groups that share a task config share one generated task.
    std::map<std::string, SyntheticTask> tasks;
    std::vector<const SyntheticTask*> group_task;
    for (const auto& g : groups) {
        std::ostringstream key;
        key << to_string(g.cfg.task.kind) << ' ' << g.cfg.task.vocab << ' ' << g.cfg.task.seq_len << ' '
            << g.cfg.task.classes << ' ' << g.cfg.task.train_samples << ' ' << g.cfg.task.eval_samples << ' '
            << g.cfg.task.seed;
        auto it = tasks.find(key.str());
        if (it == tasks.end()) it = tasks.emplace(key.str(), make_task(g.cfg.task)).first;
        group_task.push_back(&it->second);
    }

    std::vector<SeedJob> jobs;
    std::vector<std::size_t> job_group;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        fs::create_directories(groups[i].dir);
        write_file(groups[i].dir / "config.txt", serialize_config(groups[i].cfg));
        for (auto seed : groups[i].cfg.seeds) {
            jobs.push_back({&groups[i].cfg, group_task[i], seed, groups[i].dir / ("seed_" + std::to_string(seed))});
            job_group.push_back(i);
        }
    }

    std::vector<SeedResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                results[i] = run_seed(jobs[i]);
            } catch (const std::exception& e) {
                results[i].seed = jobs[i].seed;
                results[i].error = e.what();
                std::ofstream(jobs[i].dir / "STATUS", std::ios::trunc) << "incomplete: " << e.what() << '\n';
            }
            if (opts.verbose) {
                std::lock_guard<std::mutex> lock(log_mutex);
                std::cerr << jobs[i].cfg->name << " seed " << jobs[i].seed << ": "
                          << (results[i].completed ? "complete" : "incomplete (" + results[i].error + ")")
                          << ", final accuracy " << results[i].final_accuracy << '\n';
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(opts.jobs, 1)), 1, jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<GroupSummary> out;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        std::vector<SeedResult> mine;
        for (std::size_t j = 0; j < jobs.size(); ++j)
            if (job_group[j] == i) mine.push_back(results[j]);
        out.push_back(summarize(groups[i].cfg.name, std::move(mine)));
        write_group_files(out.back(), groups[i].dir);
    }
    return out;
}

json seed_json(const SeedResult& r) {
    json j = {{"seed", r.seed},
              {"completed", r.completed},
              {"final_loss", r.final_loss},
              {"final_accuracy", r.final_accuracy},
              {"best_accuracy", r.best_accuracy},
              {"steps_to_peak", r.steps_to_peak},
              {"nonzero_params", r.nonzero_params},
              {"trainable_params", r.trainable_params}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }

Stat stat_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

void check_ratios(const std::vector<double>& ratios) {
    if (ratios.empty()) throw ConfigError("the ratio list is empty");
    for (double r : ratios)
        if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("prune ratio " + short_double(r) + " is outside [0, 1]");
}

std::string join_ranks(const std::vector<int>& ranks) {
    std::string s;
    for (std::size_t i = 0; i < ranks.size(); ++i) s += (i ? "," : "") + std::to_string(ranks[i]);
    return s;
}

std::string run_id(const fs::path& root, const fs::path& log) {
    fs::path rel = fs::relative(log.parent_path(), root.has_parent_path() ? root.parent_path() : fs::path("."));
    std::string id;
    for (const auto& part : rel) {
        const std::string s = part.string();
        if (s.empty() || s == ".") continue;
        if (!id.empty()) id += "__";
        id += s == ".." ? "up" : s;
    }
    return id.empty() ? "run" : id;
}

}  // namespace

Stat mean_std(const std::vector<double>& xs) {
    Stat s;
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

GroupSummary summarize(const std::string& name, std::vector<SeedResult> seeds) {
    GroupSummary s;
    s.name = name;
    std::vector<double> acc, loss, best;
    for (const auto& r : seeds) {
        if (!r.completed) continue;
        ++s.completed;
        acc.push_back(r.final_accuracy);
        loss.push_back(r.final_loss);
        best.push_back(r.best_accuracy);
    }
    s.final_accuracy = mean_std(acc);
    s.final_loss = mean_std(loss);
    s.best_accuracy = mean_std(best);
    s.seeds = std::move(seeds);
    return s;
}

SeedResult seed_result_from_log(const fs::path& metrics_path) {
    const ParsedLog log = parse_log(metrics_path);
    const bool completed = log.end && log.end->value("completed", false);
    SeedResult r = seed_result_from_evals(log.header.at("seed").get<std::uint64_t>(), log.evals, completed);
    if (log.end && log.end->contains("error")) r.error = log.end->at("error").get<std::string>();
    return r;
}

std::string summary_json(const GroupSummary& s) {
    json seeds = json::array();
    std::vector<std::uint64_t> incomplete;
    for (const auto& r : s.seeds) {
        seeds.push_back(seed_json(r));
        if (!r.completed) incomplete.push_back(r.seed);
    }
    json j = {{"name", s.name},
              {"completed", s.completed},
              {"incomplete_seeds", incomplete},
              {"final_accuracy", stat_json(s.final_accuracy)},
              {"final_loss", stat_json(s.final_loss)},
              {"best_accuracy", stat_json(s.best_accuracy)},
              {"seeds", seeds}};
    return j.dump(2) + "\n";
}

GroupSummary read_summary_json(const fs::path& path) {
    try {
        const json j = json::parse(read_file(path));
        GroupSummary s;
        s.name = j.at("name").get<std::string>();
        s.completed = j.at("completed").get<std::size_t>();
        s.final_accuracy = stat_from(j.at("final_accuracy"));
        s.final_loss = stat_from(j.at("final_loss"));
        s.best_accuracy = stat_from(j.at("best_accuracy"));
        for (const auto& r : j.at("seeds")) {
            SeedResult x;
            x.seed = r.at("seed").get<std::uint64_t>();
            x.completed = r.at("completed").get<bool>();
            x.final_loss = r.at("final_loss").get<double>();
            x.final_accuracy = r.at("final_accuracy").get<double>();
            x.best_accuracy = r.at("best_accuracy").get<double>();
            x.steps_to_peak = r.at("steps_to_peak").get<long>();
            x.nonzero_params = r.at("nonzero_params").get<long>();
            x.trainable_params = r.at("trainable_params").get<long>();
            x.error = r.value("error", std::string());
            s.seeds.push_back(std::move(x));
        }
        return s;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

GroupSummary run_group(const ExperimentConfig& cfg, const fs::path& dir, const RunOptions& opts) {
    return run_groups({GroupJob{cfg, dir}}, opts).front();
}

GroupSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    const fs::path dir = opts.out / cfg.name;
    if (fs::exists(dir / "config.txt") && read_file(dir / "config.txt") != serialize_config(cfg)) {
        throw ConfigError("'" + dir.string() + "' already holds a different experiment named '" + cfg.name + "'");
    }
    return run_group(cfg, dir, opts);
}

std::vector<SweepRow> sweep_ratio(const ExperimentConfig& cfg, std::vector<double> ratios, const RunOptions& opts) {
    check_ratios(ratios);
    if (cfg.train.prune.strategy == PruneStrategy::none) {
        throw ConfigError("a ratio sweep needs a pruning strategy other than none");
    }
    std::sort(ratios.begin(), ratios.end());
    ratios.erase(std::unique(ratios.begin(), ratios.end()), ratios.end());

    const fs::path root = opts.out / cfg.name;
    std::vector<GroupJob> groups;
    for (double r : ratios) {
        GroupJob g{cfg, root / ("ratio_" + short_double(r))};
        g.cfg.name = cfg.name + "_ratio_" + short_double(r);
        g.cfg.train.prune.ratio = r;
        groups.push_back(std::move(g));
    }
    const auto summaries = run_groups(groups, opts);

    std::vector<SweepRow> rows;
    std::ostringstream tsv;
    tsv << "ratio\tseeds\tcompleted\tmean_accuracy\tstd_accuracy\tmean_loss\tstd_loss\n";
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        const auto& s = summaries[i];
        tsv << short_double(ratios[i]) << '\t' << s.seeds.size() << '\t' << s.completed << '\t'
            << short_double(s.final_accuracy.mean) << '\t' << short_double(s.final_accuracy.std) << '\t'
            << short_double(s.final_loss.mean) << '\t' << short_double(s.final_loss.std) << '\n';
        rows.push_back({ratios[i], s});
    }
    write_file(root / "sweep.tsv", tsv.str());
    return rows;
}

std::vector<AblationVariant> ablation_variants(const ExperimentConfig& base) {
    ExperimentConfig b = base;
    b.seeds = {base.seeds.at(0)};
    if (b.plan.kind != PlanKind::linear && b.plan.kind != PlanKind::preset) {
        throw ConfigError("ablation needs a linear or preset base plan, got " + to_string(b.plan.kind));
    }
    const RankPlan full = b.rank_plan();
    const long total = full.total();
    const long L = static_cast<long>(full.layers());
    if (total % L != 0) throw ConfigError("base plan total " + std::to_string(total) + " is not a multiple of the depth");
    const int mean = static_cast<int>(total / L);

    std::size_t min_side = static_cast<std::size_t>(-1);
    for (const auto& s : b.dims().block_shapes(b.train.adapter.adapted)) min_side = std::min({min_side, s.d1, s.d2});
    const int r_last = static_cast<int>(std::min<long>(total, static_cast<long>(min_side)));

    auto variant = [&](const std::string& name, PlanSpec plan, PruneStrategy strategy) {
        AblationVariant v{name, b};
        v.config.name = base.name + "_" + name;
        v.config.plan = std::move(plan);
        v.config.train.prune.strategy = strategy;
        return v;
    };

    PlanSpec linear = b.plan;
    PlanSpec fixed;
    fixed.kind = PlanKind::uniform;
    fixed.rank = mean;
    PlanSpec inverted = b.plan;
    if (b.plan.kind == PlanKind::linear) {
        inverted.kind = PlanKind::inverted;
    } else {
        inverted.kind = PlanKind::explicit_list;
        inverted.ranks.assign(full.ranks.rbegin(), full.ranks.rend());
        inverted.budget_avg = mean;
    }
    PlanSpec concentrated;
    concentrated.kind = PlanKind::concentrated;
    concentrated.r_last = r_last;

    return {
        variant("full", linear, PruneStrategy::prilora_A),
        variant("fixed", fixed, PruneStrategy::prilora_A),
        variant("inverted", inverted, PruneStrategy::prilora_A),
        variant("concentrated", concentrated, PruneStrategy::prilora_A),
        variant("no_pruning", linear, PruneStrategy::none),
        variant("prune_B_rows", linear, PruneStrategy::B_rows),
        variant("prune_B_cols", linear, PruneStrategy::B_cols),
        variant("random_A_cols", linear, PruneStrategy::random_A_cols),
    };
}

std::vector<AblationRow> ablate(const ExperimentConfig& base, const RunOptions& opts) {
    base.validate();
    const auto variants = ablation_variants(base);
    const fs::path root = opts.out / base.name;
    std::vector<GroupJob> groups;
    for (const auto& v : variants) groups.push_back({v.config, root / v.name});
    const auto summaries = run_groups(groups, opts);

    std::vector<AblationRow> rows;
    std::ostringstream tsv;
    tsv << "variant\tplan\tranks\tstrategy\tratio\ttrainable_params\tseed\tcompleted\tfinal_accuracy\tfinal_loss\t"
           "best_accuracy\tsteps_to_peak\n";
    for (std::size_t i = 0; i < variants.size(); ++i) {
        const auto& cfg = variants[i].config;
        AblationRow row;
        row.variant = variants[i].name;
        row.plan = cfg.rank_plan();
        row.strategy = cfg.train.prune.strategy;
        row.ratio = cfg.train.prune.ratio;
        row.trainable_params = trainable_param_count(row.plan, cfg.dims().block_shapes(cfg.train.adapter.adapted));
        row.summary = summaries[i];
        const SeedResult& r = row.summary.seeds.front();
        tsv << row.variant << '\t' << to_string(row.plan.kind) << '\t' << join_ranks(row.plan.ranks) << '\t'
            << to_string(row.strategy) << '\t' << short_double(row.ratio) << '\t' << row.trainable_params << '\t'
            << r.seed << '\t' << (r.completed ? 1 : 0) << '\t' << short_double(r.final_accuracy) << '\t'
            << short_double(r.final_loss) << '\t' << short_double(r.best_accuracy) << '\t' << r.steps_to_peak << '\n';
        rows.push_back(std::move(row));
    }
    write_file(root / "grid.tsv", tsv.str());
    return rows;
}

ReportResult report(const std::vector<fs::path>& runs, const fs::path& out) {
    ReportResult result;
    std::vector<std::pair<fs::path, fs::path>> found;  // (root, log)
    for (const auto& root : runs) {
        std::vector<fs::path> logs;
        std::error_code ec;
        if (fs::is_regular_file(root, ec) && root.filename() == "metrics.jsonl") {
            logs.push_back(root);
        } else if (fs::is_directory(root, ec)) {
            for (const auto& e : fs::recursive_directory_iterator(root, ec))
                if (e.is_regular_file() && e.path().filename() == "metrics.jsonl") logs.push_back(e.path());
        }
        std::sort(logs.begin(), logs.end());
        if (logs.empty()) result.missing.push_back(root);
        for (auto& l : logs) found.emplace_back(root, std::move(l));
    }

    fs::create_directories(out);
    for (const auto& [root, log_path] : found) {
        ParsedLog log;
        try {
            log = parse_log(log_path);
        } catch (const FormatError&) {
            result.missing.push_back(log_path);
            continue;
        }
        const fs::path dir = out / run_id(root, log_path);
        fs::create_directories(dir);

        std::ostringstream curves;
        curves << "step\tloss\taccuracy\tnonzero_params\ttrainable_params\tnonzero_fraction\tprune_events\n";
        for (const auto& e : log.evals) {
            const double frac =
                e.trainable_params ? static_cast<double>(e.nonzero_params) / static_cast<double>(e.trainable_params) : 0.0;
            curves << e.step << '\t' << short_double(e.loss) << '\t' << short_double(e.accuracy) << '\t'
                   << e.nonzero_params << '\t' << e.trainable_params << '\t' << short_double(frac) << '\t'
                   << e.prune_events.size() << '\n';
        }
        write_file(dir / "curves.tsv", curves.str());

        std::ostringstream traj;
        traj << "step";
        const auto labels = log.header.value("coords", json::array());
        for (const auto& l : labels) traj << '\t' << l.get<std::string>();
        traj << "\tprune_event\n";
        std::ostringstream nonzero;
        nonzero << "step\ta_nonzero_fraction\tprune_event\n";
        for (const auto& r : log.trajectory) {
            traj << r.step;
            for (double v : r.values) traj << '\t' << short_double(v);
            traj << '\t' << (r.prune_event ? 1 : 0) << '\n';
            nonzero << r.step << '\t' << short_double(r.a_nonzero_fraction) << '\t' << (r.prune_event ? 1 : 0) << '\n';
        }
        write_file(dir / "trajectory.tsv", traj.str());
        write_file(dir / "nonzero.tsv", nonzero.str());
        result.logs.push_back(log_path);
    }

    std::ostringstream missing;
    for (const auto& m : result.missing) missing << m.string() << '\n';
    write_file(out / "missing.txt", missing.str());
    return result;
}

}  // namespace prilora
