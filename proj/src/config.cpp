#include "prilora/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "prilora/errors.hpp"

namespace prilora {

RankPlan PlanSpec::build(int layers) const {
    switch (kind) {
        case PlanKind::linear:
            return budget_avg ? linear_plan(layers, r_start, r_end, *budget_avg) : linear_plan(layers, r_start, r_end);
        case PlanKind::uniform:
            return uniform_plan(layers, rank);
        case PlanKind::inverted: {
            RankPlan p = budget_avg ? linear_plan(layers, r_start, r_end, *budget_avg) : linear_plan(layers, r_start, r_end);
            std::reverse(p.ranks.begin(), p.ranks.end());
            p.kind = PlanKind::inverted;
            return p;
        }
        case PlanKind::concentrated: {
            const int mean = budget_avg ? *budget_avg : (r_start + r_end) / 2;
            return concentrated_plan(layers, r_last > 0 ? r_last : layers * mean);
        }
        case PlanKind::preset: {
            if (layers != 12) throw ConfigError("the deberta preset plan is only defined for 12 layers");
            return deberta_preset();
        }
        case PlanKind::explicit_list: {
            if (static_cast<int>(ranks.size()) != layers) {
                throw ConfigError("explicit ranks list has " + std::to_string(ranks.size()) + " entries for " +
                                  std::to_string(layers) + " layers");
            }
            RankPlan p = explicit_plan(ranks);
            if (budget_avg) {
                p.budget_avg = budget_avg;
                p.validate();
            }
            return p;
        }
    }
    throw ConfigError("unhandled plan kind");
}

TrainConfig default_train_config() {
    TrainConfig t;
    t.optimizer.lr = 2e-3;
    t.trajectory_samples = 5;
    return t;
}

ModelDims ExperimentConfig::dims() const {
    ModelDims d;
    d.layers = layers;
    d.d_model = d_model;
    d.heads = heads;
    d.d_ff = d_ff;
    d.vocab = task.vocab;
    d.seq_len = task.seq_len;
    d.outputs = task.kind == TaskKind::regression ? 1 : task.classes;
    return d;
}

TrainConfig ExperimentConfig::train_config(std::uint64_t seed) const {
    TrainConfig t = train;
    t.plan = rank_plan();
    t.seed = seed;
    return t;
}

void ExperimentConfig::validate() const {
    if (name.empty() || name.find_first_of("/\\") != std::string::npos) {
        throw ConfigError("name must be non-empty and free of path separators");
    }
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    task.validate();
    dims().validate();
    const TrainConfig t = train_config(seeds.front());
    t.validate();
    const auto shapes = dims().block_shapes(t.adapter.adapted);
    trainable_param_count(t.plan, shapes);  // throws RankError on oversize ranks
}

EnvLookup process_env() {
    return [](const std::string& key) -> std::optional<std::string> {
        std::string var = "PRILORA_";
        for (char c : key) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (const char* v = std::getenv(var.c_str())) return std::string(v);
        return std::nullopt;
    };
}

EnvLookup no_env() {
    return [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

long parse_long(const std::string& key, const std::string& v) {
    long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
    }
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    const long x = parse_long(key, v);
    if (x < -2147483647L || x > 2147483647L) throw ConfigError("key '" + key + "': value out of range");
    return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
    return out;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // Shortest representation that still round-trips.
    for (int prec = 1; prec <= 17; ++prec) {
        char shorter[40];
        std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
        if (std::strtod(shorter, nullptr) == v) return shorter;
    }
    return buf;
}

template <class T>
std::string join(const std::vector<T>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(xs[i]);
    }
    return s;
}

struct KeyHandler {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<std::pair<std::string, KeyHandler>>& handlers() {
    using C = ExperimentConfig;
    using S = const std::string&;
    static const std::vector<std::pair<std::string, KeyHandler>> table = {
        {"name", {[](C& c, S, S v) { c.name = v; }, [](const C& c) { return c.name; }}},
        {"task", {[](C& c, S, S v) { c.task.kind = task_kind_from_string(v); }, [](const C& c) { return to_string(c.task.kind); }}},
        {"vocab", {[](C& c, S k, S v) { c.task.vocab = parse_int(k, v); }, [](const C& c) { return std::to_string(c.task.vocab); }}},
        {"seq_len", {[](C& c, S k, S v) { c.task.seq_len = parse_int(k, v); }, [](const C& c) { return std::to_string(c.task.seq_len); }}},
        {"classes", {[](C& c, S k, S v) { c.task.classes = parse_int(k, v); }, [](const C& c) { return std::to_string(c.task.classes); }}},
        {"train_samples", {[](C& c, S k, S v) { c.task.train_samples = parse_int(k, v); }, [](const C& c) { return std::to_string(c.task.train_samples); }}},
        {"eval_samples", {[](C& c, S k, S v) { c.task.eval_samples = parse_int(k, v); }, [](const C& c) { return std::to_string(c.task.eval_samples); }}},
        {"task_seed", {[](C& c, S k, S v) { c.task.seed = parse_u64(k, v); }, [](const C& c) { return std::to_string(c.task.seed); }}},
        {"layers", {[](C& c, S k, S v) { c.layers = parse_int(k, v); }, [](const C& c) { return std::to_string(c.layers); }}},
        {"d_model", {[](C& c, S k, S v) { c.d_model = parse_int(k, v); }, [](const C& c) { return std::to_string(c.d_model); }}},
        {"heads", {[](C& c, S k, S v) { c.heads = parse_int(k, v); }, [](const C& c) { return std::to_string(c.heads); }}},
        {"d_ff", {[](C& c, S k, S v) { c.d_ff = parse_int(k, v); }, [](const C& c) { return std::to_string(c.d_ff); }}},
        {"plan", {[](C& c, S, S v) { c.plan.kind = plan_kind_from_string(v); }, [](const C& c) { return to_string(c.plan.kind); }}},
        {"r_start", {[](C& c, S k, S v) { c.plan.r_start = parse_int(k, v); }, [](const C& c) { return std::to_string(c.plan.r_start); }}},
        {"r_end", {[](C& c, S k, S v) { c.plan.r_end = parse_int(k, v); }, [](const C& c) { return std::to_string(c.plan.r_end); }}},
        {"rank", {[](C& c, S k, S v) { c.plan.rank = parse_int(k, v); }, [](const C& c) { return std::to_string(c.plan.rank); }}},
        {"r_last", {[](C& c, S k, S v) { c.plan.r_last = parse_int(k, v); }, [](const C& c) { return std::to_string(c.plan.r_last); }}},
        {"ranks", {[](C& c, S k, S v) {
                       c.plan.ranks.clear();
                       for (const auto& item : split_list(v)) c.plan.ranks.push_back(parse_int(k, item));
                   },
                   [](const C& c) { return join(c.plan.ranks); }}},
        {"budget_avg", {[](C& c, S k, S v) {
                            if (v == "none") c.plan.budget_avg.reset();
                            else c.plan.budget_avg = parse_int(k, v);
                        },
                        [](const C& c) { return c.plan.budget_avg ? std::to_string(*c.plan.budget_avg) : std::string("none"); }}},
        {"adapt", {[](C& c, S, S v) {
                       c.train.adapter.adapted.clear();
                       for (const auto& item : split_list(v)) c.train.adapter.adapted.insert(matrix_kind_from_string(item));
                   },
                   [](const C& c) {
                       std::string s;
                       for (auto k : c.train.adapter.adapted) s += (s.empty() ? "" : ",") + to_string(k);
                       return s;
                   }}},
        {"init_std", {[](C& c, S k, S v) { c.train.adapter.init_std = parse_double(k, v); }, [](const C& c) { return fmt_double(c.train.adapter.init_std); }}},
        {"lora_alpha", {[](C& c, S k, S v) {
                            if (v == "none") c.train.adapter.alpha.reset();
                            else c.train.adapter.alpha = parse_double(k, v);
                        },
                        [](const C& c) { return c.train.adapter.alpha ? fmt_double(*c.train.adapter.alpha) : std::string("none"); }}},
        {"prune_strategy", {[](C& c, S, S v) { c.train.prune.strategy = prune_strategy_from_string(v); }, [](const C& c) { return to_string(c.train.prune.strategy); }}},
        {"prune_ratio", {[](C& c, S k, S v) { c.train.prune.ratio = parse_double(k, v); }, [](const C& c) { return fmt_double(c.train.prune.ratio); }}},
        {"prune_interval", {[](C& c, S k, S v) { c.train.prune.interval_steps = parse_long(k, v); }, [](const C& c) { return std::to_string(c.train.prune.interval_steps); }}},
        {"ema_decay", {[](C& c, S k, S v) { c.train.prune.ema_decay = parse_double(k, v); }, [](const C& c) { return fmt_double(c.train.prune.ema_decay); }}},
        {"ema_init", {[](C& c, S k, S v) {
                          if (v == "zero") c.train.prune.ema_copy_first = false;
                          else if (v == "first_batch") c.train.prune.ema_copy_first = true;
                          else throw ConfigError("key '" + k + "': expected zero or first_batch");
                      },
                      [](const C& c) { return std::string(c.train.prune.ema_copy_first ? "first_batch" : "zero"); }}},
        {"optimizer", {[](C& c, S, S v) { c.train.optimizer.kind = optimizer_kind_from_string(v); }, [](const C& c) { return to_string(c.train.optimizer.kind); }}},
        {"lr", {[](C& c, S k, S v) { c.train.optimizer.lr = parse_double(k, v); }, [](const C& c) { return fmt_double(c.train.optimizer.lr); }}},
        {"beta1", {[](C& c, S k, S v) { c.train.optimizer.beta1 = parse_double(k, v); }, [](const C& c) { return fmt_double(c.train.optimizer.beta1); }}},
        {"beta2", {[](C& c, S k, S v) { c.train.optimizer.beta2 = parse_double(k, v); }, [](const C& c) { return fmt_double(c.train.optimizer.beta2); }}},
        {"adam_eps", {[](C& c, S k, S v) { c.train.optimizer.eps = parse_double(k, v); }, [](const C& c) { return fmt_double(c.train.optimizer.eps); }}},
        {"weight_decay", {[](C& c, S k, S v) { c.train.optimizer.weight_decay = parse_double(k, v); }, [](const C& c) { return fmt_double(c.train.optimizer.weight_decay); }}},
        {"lr_schedule", {[](C& c, S, S v) { c.train.optimizer.schedule = lr_schedule_from_string(v); }, [](const C& c) { return to_string(c.train.optimizer.schedule); }}},
        {"warmup_steps", {[](C& c, S k, S v) { c.train.optimizer.warmup_steps = parse_long(k, v); }, [](const C& c) { return std::to_string(c.train.optimizer.warmup_steps); }}},
        {"batch_size", {[](C& c, S k, S v) { c.train.batch_size = parse_int(k, v); }, [](const C& c) { return std::to_string(c.train.batch_size); }}},
        {"steps", {[](C& c, S k, S v) { c.train.steps = parse_long(k, v); }, [](const C& c) { return std::to_string(c.train.steps); }}},
        {"eval_interval", {[](C& c, S k, S v) { c.train.eval_interval = parse_long(k, v); }, [](const C& c) { return std::to_string(c.train.eval_interval); }}},
        {"base_seed", {[](C& c, S k, S v) { c.train.base_seed = parse_u64(k, v); }, [](const C& c) { return std::to_string(c.train.base_seed); }}},
        {"seeds", {[](C& c, S, S v) { c.seeds = parse_seed_list(v); }, [](const C& c) { return join(c.seeds); }}},
        {"trajectory_samples", {[](C& c, S k, S v) { c.train.trajectory_samples = parse_int(k, v); }, [](const C& c) { return std::to_string(c.train.trajectory_samples); }}},
    };
    return table;
}

const KeyHandler* find_handler(const std::string& key) {
    for (const auto& [k, h] : handlers())
        if (k == key) return &h;
    return nullptr;
}


}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k{"version"};
        for (const auto& [name, h] : handlers()) k.push_back(name);
        return k;
    }();
    return keys;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) out.push_back(parse_double("list", item));
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(text)) out.push_back(parse_u64("seeds", item));
    if (out.empty()) throw ConfigError("seed list is empty");
    return out;
}

ExperimentConfig parse_config(std::istream& in, const EnvLookup& env) {
    ExperimentConfig cfg;
    std::map<std::string, int> seen;
    bool have_version = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (seen[key]++) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        if (!have_version) {
            if (key != "version") throw ConfigError("config must start with 'version = " + std::to_string(kConfigVersion) + "'");
            if (parse_int(key, value) != kConfigVersion) {
                throw ConfigError("unsupported config version " + value);
            }
            have_version = true;
            continue;
        }
        const KeyHandler* h = find_handler(key);
        if (!h) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        try {
            h->set(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_version) throw ConfigError("config is missing 'version = " + std::to_string(kConfigVersion) + "'");
    for (const auto& [key, h] : handlers()) {
        if (auto v = env(key)) {
            try {
                h.set(cfg, key, trim(*v));
            } catch (const ConfigError& e) {
                throw ConfigError(std::string("environment override: ") + e.what());
            }
        }
    }
    return cfg;
}

ExperimentConfig parse_config_string(const std::string& text, const EnvLookup& env) {
    std::istringstream in(text);
    return parse_config(in, env);
}

ExperimentConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    return parse_config(in, env);
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out = "version = " + std::to_string(kConfigVersion) + "\n";
    for (const auto& [key, h] : handlers()) {
        const std::string v = h.get(cfg);
        if (key == "ranks" && v.empty()) continue;
        out += key + " = " + v + "\n";
    }
    return out;
}

}  // namespace prilora
