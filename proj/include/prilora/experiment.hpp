#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prilora/config.hpp"
#include "prilora/train.hpp"

namespace prilora {

/// Outcome of one seed, as recoverable from its metrics log.
struct SeedResult {
    std::uint64_t seed = 0;
    bool completed = false;
    double final_loss = 0.0;
    double final_accuracy = 0.0;
    double best_accuracy = 0.0;
    long steps_to_peak = 0;
    long nonzero_params = 0;
    long trainable_params = 0;
    std::string error;

    friend bool operator==(const SeedResult&, const SeedResult&) = default;
};

struct Stat {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single value

    friend bool operator==(const Stat&, const Stat&) = default;
};

Stat mean_std(const std::vector<double>& xs);

/// Aggregate over the completed seeds of one group.
struct GroupSummary {
    std::string name;
    std::vector<SeedResult> seeds;
    std::size_t completed = 0;
    Stat final_accuracy;
    Stat final_loss;
    Stat best_accuracy;

    bool all_completed() const { return completed == seeds.size(); }
    friend bool operator==(const GroupSummary&, const GroupSummary&) = default;
};

GroupSummary summarize(const std::string& name, std::vector<SeedResult> seeds);

/// Reads one metrics.jsonl back into a SeedResult. Throws FormatError on
/// malformed records; a log without an end record counts as incomplete.
SeedResult seed_result_from_log(const std::filesystem::path& metrics_path);

std::string summary_json(const GroupSummary& summary);
GroupSummary read_summary_json(const std::filesystem::path& path);

struct RunOptions {
    std::filesystem::path out = "out";
    int jobs = 1;
    /// Echo per-seed progress lines to stderr.
    bool verbose = false;
};

/// Layout of a group directory:
///   config.txt, summary.json, summary.tsv, seed_<s>/{metrics.jsonl,
///   checkpoint_final.bin, checkpoint_best.bin, STATUS}
/// A diverged seed keeps its partial log, writes checkpoint_last_good.bin
/// and marks STATUS incomplete.
GroupSummary run_group(const ExperimentConfig& cfg, const std::filesystem::path& dir, const RunOptions& opts);

/// run_group into <out>/<name>. Refuses to reuse a directory that holds a
/// different configuration under the same name.
GroupSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);

struct SweepRow {
    double ratio = 0.0;
    GroupSummary summary;
};

/// One group per ratio under <out>/<name>/ratio_<r>, rows ordered by
/// ratio, and <out>/<name>/sweep.tsv.
std::vector<SweepRow> sweep_ratio(const ExperimentConfig& cfg, std::vector<double> ratios, const RunOptions& opts);

struct AblationVariant {
    std::string name;
    ExperimentConfig config;
};

/// The eight ablation variants derived from a base config, all on the base
/// config's first seed.
std::vector<AblationVariant> ablation_variants(const ExperimentConfig& base);

struct AblationRow {
    std::string variant;
    RankPlan plan;
    PruneStrategy strategy = PruneStrategy::none;
    double ratio = 0.0;
    long trainable_params = 0;
    GroupSummary summary;
};

/// Runs every variant under <out>/<name>/<variant> and writes grid.tsv.
std::vector<AblationRow> ablate(const ExperimentConfig& base, const RunOptions& opts);

struct ReportResult {
    std::vector<std::filesystem::path> logs;     // exported
    std::vector<std::filesystem::path> missing;  // given but without logs
};

/// For every metrics.jsonl under the given paths, writes
/// <out>/<run id>/{curves.tsv, trajectory.tsv, nonzero.tsv}. Paths that
/// hold no log are listed in <out>/missing.txt and skipped.
ReportResult report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out);

}  // namespace prilora
