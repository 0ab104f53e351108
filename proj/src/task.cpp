#include "prilora/task.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "prilora/errors.hpp"
#include "prilora/rng.hpp"

namespace prilora {

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::majority: return "majority";
        case TaskKind::regression: return "regression";
        case TaskKind::parity: return "parity";
    }
    return "majority";
}

TaskKind task_kind_from_string(const std::string& name) {
    if (name == "majority") return TaskKind::majority;
    if (name == "regression") return TaskKind::regression;
    if (name == "parity") return TaskKind::parity;
    throw ConfigError("unknown task kind '" + name + "'");
}

void TaskConfig::validate() const {
    if (vocab < 2) throw ConfigError("task vocab must be >= 2");
    if (seq_len < 1) throw ConfigError("task seq_len must be >= 1");
    if (train_samples < 1 || eval_samples < 1) throw ConfigError("task splits must be non-empty");
    if (kind == TaskKind::majority && (classes < 2 || classes > vocab)) {
        throw ConfigError("majority task needs 2 <= classes <= vocab");
    }
    if (kind == TaskKind::parity && classes != 2) throw ConfigError("parity task has exactly 2 classes");
    // Disjoint splits need enough distinct sequences.
    const double space = std::pow(static_cast<double>(vocab), seq_len);
    if (space < 2.0 * (train_samples + eval_samples)) {
        throw ConfigError("task sequence space too small for disjoint splits of the requested sizes");
    }
}

namespace {

constexpr std::uint64_t kTokenStream = 0x7A5C;
constexpr std::uint64_t kValueStream = 0x7A5D;

void label_sample(Sample& s, const TaskConfig& cfg, const std::vector<double>& token_values) {
    switch (cfg.kind) {
        case TaskKind::majority: {
            std::vector<int> counts(static_cast<std::size_t>(cfg.classes), 0);
            for (int t : s.tokens) ++counts[static_cast<std::size_t>(t % cfg.classes)];
            s.label = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
            break;
        }
        case TaskKind::parity: {
            const auto markers = std::count(s.tokens.begin(), s.tokens.end(), 0);
            s.label = static_cast<int>(markers % 2);
            break;
        }
        case TaskKind::regression: {
            double m = 0.0;
            for (int t : s.tokens) m += token_values[static_cast<std::size_t>(t)];
            s.target = m / static_cast<double>(s.tokens.size());
            break;
        }
    }
}

}  // namespace

SyntheticTask make_task(const TaskConfig& config) {
    config.validate();
    SyntheticTask task;
    task.config = config;

    std::vector<double> token_values(static_cast<std::size_t>(config.vocab));
    Rng value_rng = Rng(config.seed, kValueStream);
    for (auto& v : token_values) v = value_rng.normal();

    Rng rng(config.seed, kTokenStream);
    std::set<std::vector<int>> seen_train;
    auto draw = [&]() {
        Sample s;
        s.tokens.resize(static_cast<std::size_t>(config.seq_len));
        for (auto& t : s.tokens) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.vocab)));
        label_sample(s, config, token_values);
        return s;
    };

    task.train.reserve(static_cast<std::size_t>(config.train_samples));
    for (int i = 0; i < config.train_samples; ++i) {
        task.train.push_back(draw());
        seen_train.insert(task.train.back().tokens);
    }
    task.eval.reserve(static_cast<std::size_t>(config.eval_samples));
    const long max_attempts = 100L * config.eval_samples + 1000;
    long attempts = 0;
    while (static_cast<int>(task.eval.size()) < config.eval_samples) {
        if (++attempts > max_attempts) throw ConfigError("could not draw a disjoint eval split");
        Sample s = draw();
        if (seen_train.count(s.tokens)) continue;
        task.eval.push_back(std::move(s));
    }
    return task;
}

}  // namespace prilora
