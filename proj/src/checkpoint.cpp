#include "prilora/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "prilora/binary_io.hpp"
#include "prilora/errors.hpp"
#include "prilora/model.hpp"

namespace prilora {

namespace {

constexpr char kMagic[4] = {'P', 'R', 'L', 'C'};

void write_i64(std::ostream& out, long v) { io::write_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
long read_i64(std::istream& in) { return static_cast<long>(static_cast<std::int64_t>(io::read_u64(in))); }

void write_plan(std::ostream& out, const RankPlan& plan) {
    io::write_string(out, to_string(plan.kind));
    write_i64(out, plan.r_start);
    write_i64(out, plan.r_end);
    write_i64(out, plan.budget_avg ? *plan.budget_avg : -1);
    io::write_u32(out, static_cast<std::uint32_t>(plan.ranks.size()));
    for (int r : plan.ranks) write_i64(out, r);
}

RankPlan read_plan(std::istream& in) {
    RankPlan plan;
    plan.kind = plan_kind_from_string(io::read_string(in));
    plan.r_start = static_cast<int>(read_i64(in));
    plan.r_end = static_cast<int>(read_i64(in));
    const long budget = read_i64(in);
    if (budget >= 0) plan.budget_avg = static_cast<int>(budget);
    const auto n = io::read_u32(in);
    if (n > 4096) throw FormatError("checkpoint plan has implausible length");
    plan.ranks.resize(n);
    for (auto& r : plan.ranks) r = static_cast<int>(read_i64(in));
    return plan;
}

void write_ema(std::ostream& out, const std::vector<EmaState>& list) {
    io::write_u32(out, static_cast<std::uint32_t>(list.size()));
    for (const auto& e : list) {
        io::write_f64(out, e.decay);
        io::write_u32(out, e.copy_first ? 1u : 0u);
        io::write_u64(out, static_cast<std::uint64_t>(e.updates));
        write_tensor(out, Tensor({e.xbar.size()}, e.xbar));
    }
}

std::vector<EmaState> read_ema(std::istream& in) {
    const auto n = io::read_u32(in);
    std::vector<EmaState> list(n);
    for (auto& e : list) {
        e.decay = io::read_f64(in);
        e.copy_first = io::read_u32(in) != 0;
        e.updates = static_cast<long>(io::read_u64(in));
        const Tensor t = read_tensor(in);
        e.xbar.assign(t.data().begin(), t.data().end());
    }
    return list;
}

}  // namespace

bool operator==(const Checkpoint& a, const Checkpoint& b) {
    if (a.adapters.size() != b.adapters.size()) return false;
    for (std::size_t i = 0; i < a.adapters.size(); ++i) {
        const auto& x = a.adapters[i];
        const auto& y = b.adapters[i];
        if (x.frozen_ref != y.frozen_ref || x.rank != y.rank || x.scale != y.scale || x.A != y.A || x.B != y.B) {
            return false;
        }
    }
    return a.version == b.version && a.step == b.step && a.seed == b.seed && a.plan == b.plan &&
           a.input_ema == b.input_ema && a.latent_ema == b.latent_ema && a.head_weight == b.head_weight &&
           a.head_bias == b.head_bias && a.optimizer_steps == b.optimizer_steps &&
           a.first_moment == b.first_moment && a.second_moment == b.second_moment;
}

void save_checkpoint(std::ostream& out, const Checkpoint& c) {
    out.write(kMagic, 4);
    io::write_u32(out, c.version);
    write_i64(out, c.step);
    io::write_u64(out, c.seed);
    write_plan(out, c.plan);
    io::write_u32(out, static_cast<std::uint32_t>(c.adapters.size()));
    for (const auto& a : c.adapters) {
        io::write_string(out, a.frozen_ref);
        io::write_u32(out, static_cast<std::uint32_t>(a.rank));
        io::write_f64(out, a.scale);
        write_tensor(out, a.A);
        write_tensor(out, a.B);
    }
    write_ema(out, c.input_ema);
    write_ema(out, c.latent_ema);
    write_tensor(out, c.head_weight);
    write_tensor(out, c.head_bias);
    write_i64(out, c.optimizer_steps);
    io::write_u32(out, static_cast<std::uint32_t>(c.first_moment.size()));
    for (const auto& t : c.first_moment) write_tensor(out, t);
    for (const auto& t : c.second_moment) write_tensor(out, t);
    if (!out) throw Error("checkpoint write failed");
}

Checkpoint load_checkpoint(std::istream& in) {
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
    Checkpoint c;
    c.version = io::read_u32(in);
    if (c.version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(c.version));
    }
    c.step = read_i64(in);
    c.seed = io::read_u64(in);
    c.plan = read_plan(in);
    const auto n = io::read_u32(in);
    c.adapters.resize(n);
    for (auto& a : c.adapters) {
        a.frozen_ref = io::read_string(in);
        a.rank = static_cast<int>(io::read_u32(in));
        a.scale = io::read_f64(in);
        a.A = read_tensor(in);
        a.B = read_tensor(in);
    }
    c.input_ema = read_ema(in);
    c.latent_ema = read_ema(in);
    c.head_weight = read_tensor(in);
    c.head_bias = read_tensor(in);
    c.optimizer_steps = read_i64(in);
    const auto moments = io::read_u32(in);
    c.first_moment.reserve(moments);
    for (std::uint32_t i = 0; i < moments; ++i) c.first_moment.push_back(read_tensor(in));
    c.second_moment.reserve(moments);
    for (std::uint32_t i = 0; i < moments; ++i) c.second_moment.push_back(read_tensor(in));
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    return load_checkpoint(in);
}

Checkpoint capture(const ToyModel& model, const Optimizer& optimizer, long step, std::uint64_t seed) {
    Checkpoint c;
    c.step = step;
    c.seed = seed;
    c.plan = model.plan;
    c.adapters = model.adapters;
    c.input_ema = model.input_ema;
    c.latent_ema = model.latent_ema;
    c.head_weight = model.head_weight;
    c.head_bias = model.head_bias;
    c.optimizer_steps = optimizer.steps_taken();
    c.first_moment = optimizer.first_moment();
    c.second_moment = optimizer.second_moment();
    return c;
}

void restore(ToyModel& model, Optimizer& optimizer, const Checkpoint& c) {
    if (c.plan.ranks != model.plan.ranks) throw FormatError("checkpoint rank plan differs from the model's");
    if (c.adapters.size() != model.adapters.size() || c.input_ema.size() != model.input_ema.size() ||
        c.latent_ema.size() != model.latent_ema.size()) {
        throw FormatError("checkpoint adapter layout differs from the model's");
    }
    for (std::size_t i = 0; i < c.adapters.size(); ++i) {
        const auto& src = c.adapters[i];
        const auto& dst = model.adapters[i];
        if (src.frozen_ref != dst.frozen_ref || src.A.shape() != dst.A.shape() || src.B.shape() != dst.B.shape()) {
            throw FormatError("checkpoint adapter " + src.frozen_ref + " does not match the model");
        }
    }
    if (c.head_weight.shape() != model.head_weight.shape() || c.head_bias.shape() != model.head_bias.shape()) {
        throw FormatError("checkpoint head shape differs from the model's");
    }
    optimizer.restore(c.optimizer_steps, c.first_moment, c.second_moment);
    model.adapters = c.adapters;
    model.input_ema = c.input_ema;
    model.latent_ema = c.latent_ema;
    model.head_weight = c.head_weight;
    model.head_bias = c.head_bias;
}

}  // namespace prilora
