#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prilora/model.hpp"
#include "prilora/rank_plan.hpp"
#include "prilora/task.hpp"
#include "prilora/train.hpp"

namespace prilora {

inline constexpr int kConfigVersion = 1;

/// How to produce the rank plan; turned into a RankPlan once depth is known.
struct PlanSpec {
    PlanKind kind = PlanKind::linear;
    int r_start = 2;
    int r_end = 6;
    int rank = 4;       // uniform
    int r_last = 0;     // concentrated; 0 puts the whole budget in the last layer
    std::vector<int> ranks;  // explicit
    std::optional<int> budget_avg;

    RankPlan build(int layers) const;
};

/// Training defaults for experiments: Adam at 2e-3 and five logged A
/// trajectories.
TrainConfig default_train_config();

/// A fully resolved experiment: task, model, plan, training and seeds.
struct ExperimentConfig {
    std::string name = "experiment";
    TaskConfig task;
    int layers = 2;
    int d_model = 32;
    int heads = 2;
    int d_ff = 64;
    PlanSpec plan;
    TrainConfig train = default_train_config();  // plan and seed are filled per run
    std::vector<std::uint64_t> seeds{1};

    ModelDims dims() const;
    RankPlan rank_plan() const { return plan.build(layers); }
    TrainConfig train_config(std::uint64_t seed) const;
    /// Throws ConfigError (or the error of the failing module) on any
    /// inconsistency, including ranks that exceed a matrix's smaller side.
    void validate() const;
};

/// Looks up an environment override for a config key; nullopt = unset.
using EnvLookup = std::function<std::optional<std::string>(const std::string& key)>;

/// Override lookup through the process environment, PRILORA_<KEY> with the
/// key upper-cased.
EnvLookup process_env();
EnvLookup no_env();

/// Flat "key = value" text, '#' starts a comment, and the first setting must
/// be "version = 1". Unknown keys are rejected.
ExperimentConfig parse_config(std::istream& in, const EnvLookup& env = no_env());
ExperimentConfig parse_config_string(const std::string& text, const EnvLookup& env = no_env());
ExperimentConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env());

/// Canonical text form; parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const ExperimentConfig& cfg);

/// Every recognized key, in canonical order.
const std::vector<std::string>& config_keys();

std::vector<double> parse_double_list(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace prilora
