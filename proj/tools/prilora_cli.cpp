// Command-line front end: run, sweep-ratio, ablate, report, validate-config.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure (including
// any seed that did not complete).

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prilora/config.hpp"
#include "prilora/errors.hpp"
#include "prilora/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Args {
    std::string config;
    std::string seeds;
    std::string out = "out";
    std::string ratios;
    int jobs = 1;
    bool quiet = false;
    std::vector<std::string> runs;
};

prilora::ExperimentConfig load(const Args& a) {
    prilora::ExperimentConfig cfg = prilora::load_config(a.config);
    if (!a.seeds.empty()) cfg.seeds = prilora::parse_seed_list(a.seeds);
    cfg.validate();
    return cfg;
}

prilora::RunOptions run_options(const Args& a) {
    prilora::RunOptions o;
    o.out = a.out;
    o.jobs = a.jobs;
    o.verbose = !a.quiet;
    return o;
}

void print_summary(const prilora::GroupSummary& s) {
    std::printf("%-32s seeds=%zu completed=%zu accuracy=%.4f +- %.4f loss=%.4f +- %.4f\n", s.name.c_str(),
                s.seeds.size(), s.completed, s.final_accuracy.mean, s.final_accuracy.std, s.final_loss.mean,
                s.final_loss.std);
}

int cmd_validate(const Args& a) {
    const auto cfg = load(a);
    const auto plan = cfg.rank_plan();
    std::printf("ok: %s, plan %s [", cfg.name.c_str(), prilora::to_string(plan.kind).c_str());
    for (std::size_t i = 0; i < plan.ranks.size(); ++i) std::printf("%s%d", i ? "," : "", plan.ranks[i]);
    std::printf("], %zu seed(s)\n", cfg.seeds.size());
    return kExitOk;
}

int cmd_run(const Args& a) {
    const auto cfg = load(a);
    const auto s = prilora::run_experiment(cfg, run_options(a));
    print_summary(s);
    return s.all_completed() ? kExitOk : kExitRuntime;
}

int cmd_sweep(const Args& a) {
    const auto cfg = load(a);
    const auto rows = prilora::sweep_ratio(cfg, prilora::parse_double_list(a.ratios), run_options(a));
    bool ok = true;
    for (const auto& r : rows) {
        print_summary(r.summary);
        ok = ok && r.summary.all_completed();
    }
    return ok ? kExitOk : kExitRuntime;
}

int cmd_ablate(const Args& a) {
    const auto cfg = load(a);
    const auto rows = prilora::ablate(cfg, run_options(a));
    bool ok = true;
    for (const auto& r : rows) {
        std::printf("%-14s trainable=%-6ld ", r.variant.c_str(), r.trainable_params);
        print_summary(r.summary);
        ok = ok && r.summary.all_completed();
    }
    return ok ? kExitOk : kExitRuntime;
}

int cmd_report(const Args& a) {
    std::vector<std::filesystem::path> runs(a.runs.begin(), a.runs.end());
    const auto res = prilora::report(runs, a.out);
    std::printf("exported %zu run log(s) to %s\n", res.logs.size(), a.out.c_str());
    for (const auto& m : res.missing) std::fprintf(stderr, "skipped (no readable metrics log): %s\n", m.string().c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-rank adapter fine-tuning with increasing ranks and importance pruning"};
    app.require_subcommand(1);
    Args a;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("--config", a.config, "Experiment config file");
        if (needs_config) opt->required()->check(CLI::ExistingFile);
        sub->add_option("--seeds", a.seeds, "Comma-separated seeds, overriding the config");
        sub->add_option("--out", a.out, "Output directory")->capture_default_str();
        sub->add_option("--jobs", a.jobs, "Parallel seeds/variants")->check(CLI::PositiveNumber);
        sub->add_flag("--quiet", a.quiet, "No per-seed progress lines");
    };

    auto* run = app.add_subcommand("run", "Train every seed of one config");
    add_common(run, true);
    auto* sweep = app.add_subcommand("sweep-ratio", "One run group per prune ratio");
    add_common(sweep, true);
    sweep->add_option("--ratios", a.ratios, "Comma-separated prune ratios in [0, 1]")->required();
    auto* abl = app.add_subcommand("ablate", "The eight-variant ablation grid on the config's first seed");
    add_common(abl, true);
    auto* rep = app.add_subcommand("report", "Export curves, trajectories and nonzero fractions as TSV");
    rep->add_option("runs", a.runs, "Run, group or seed directories")->required();
    rep->add_option("--out", a.out, "Export directory")->capture_default_str();
    auto* val = app.add_subcommand("validate-config", "Parse and check a config without training");
    val->add_option("--config", a.config, "Experiment config file")->required()->check(CLI::ExistingFile);
    val->add_option("--seeds", a.seeds, "Comma-separated seeds, overriding the config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) return cmd_run(a);
        if (*sweep) return cmd_sweep(a);
        if (*abl) return cmd_ablate(a);
        if (*rep) return cmd_report(a);
        if (*val) return cmd_validate(a);
    } catch (const prilora::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const prilora::BudgetError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const prilora::RankError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const prilora::ParameterError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitRuntime;
}
