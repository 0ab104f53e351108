#include "prilora/rank_plan.hpp"

#include <algorithm>
#include <numeric>

#include "prilora/errors.hpp"

namespace prilora {

std::string to_string(PlanKind kind) {
    switch (kind) {
        case PlanKind::linear: return "linear";
        case PlanKind::uniform: return "uniform";
        case PlanKind::inverted: return "inverted";
        case PlanKind::concentrated: return "concentrated";
        case PlanKind::preset: return "deberta";
        case PlanKind::explicit_list: return "explicit";
    }
    return "explicit";
}

PlanKind plan_kind_from_string(const std::string& name) {
    if (name == "linear") return PlanKind::linear;
    if (name == "uniform" || name == "fixed") return PlanKind::uniform;
    if (name == "inverted") return PlanKind::inverted;
    if (name == "concentrated") return PlanKind::concentrated;
    if (name == "deberta") return PlanKind::preset;
    if (name == "explicit") return PlanKind::explicit_list;
    throw ConfigError("unknown plan kind '" + name + "'");
}

long RankPlan::total() const noexcept { return std::accumulate(ranks.begin(), ranks.end(), 0L); }

std::size_t RankPlan::adapted_layers() const noexcept {
    return static_cast<std::size_t>(std::count_if(ranks.begin(), ranks.end(), [](int r) { return r > 0; }));
}

void RankPlan::validate() const {
    if (ranks.empty()) throw ParameterError("rank plan has no layers");
    for (int r : ranks) {
        if (r < 0) throw ParameterError("rank plan contains negative rank " + std::to_string(r));
        if (r == 0 && kind != PlanKind::concentrated && kind != PlanKind::explicit_list) {
            throw ParameterError("rank plan of kind " + to_string(kind) + " contains a zero rank");
        }
    }
    if (adapted_layers() == 0) throw ParameterError("rank plan adapts no layer");
    if (budget_avg && total() != static_cast<long>(layers()) * *budget_avg) {
        throw BudgetError("rank plan sums to " + std::to_string(total()) + ", budget is " +
                          std::to_string(layers()) + " x " + std::to_string(*budget_avg));
    }
}

namespace {

void check_linear_args(int layers, int r_start, int r_end) {
    if (layers < 2) throw ParameterError("linear plan needs at least 2 layers, got " + std::to_string(layers));
    if (r_start < 1 || r_start > r_end) {
        throw ParameterError("linear plan needs 1 <= r_start <= r_end, got " + std::to_string(r_start) + " -> " +
                             std::to_string(r_end));
    }
}

// Largest-remainder apportionment of `total` in proportion to the
// interpolated weights r_s + (r_f - r_s) * i / (L - 1), i = 0..L-1.
// Weights are scaled by (L - 1) so all arithmetic is on integers.
std::vector<int> apportion_linear(int layers, int r_start, int r_end, long total) {
    const long span = layers - 1;
    std::vector<long> weight(static_cast<std::size_t>(layers));
    for (int i = 0; i < layers; ++i) weight[static_cast<std::size_t>(i)] = r_start * span + (r_end - r_start) * i;
    const long weight_sum = std::accumulate(weight.begin(), weight.end(), 0L);

    std::vector<int> ranks(weight.size());
    std::vector<long> remainder(weight.size());
    long assigned = 0;
    for (std::size_t i = 0; i < weight.size(); ++i) {
        const long num = weight[i] * total;
        ranks[i] = static_cast<int>(num / weight_sum);
        remainder[i] = num % weight_sum;
        assigned += ranks[i];
    }
    std::vector<std::size_t> order(weight.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (long k = 0; k < total - assigned; ++k) ++ranks[order[static_cast<std::size_t>(k)]];
    return ranks;
}

}  // namespace

RankPlan linear_plan(int layers, int r_start, int r_end) {
    check_linear_args(layers, r_start, r_end);
    if ((r_start + r_end) % 2 != 0) {
        throw BudgetError("r_start + r_end = " + std::to_string(r_start + r_end) +
                          " is odd, so the mean rank is not an integer; pass an explicit budget_avg");
    }
    return linear_plan(layers, r_start, r_end, (r_start + r_end) / 2);
}

RankPlan linear_plan(int layers, int r_start, int r_end, int budget_avg) {
    check_linear_args(layers, r_start, r_end);
    if (budget_avg < 1) throw ParameterError("budget_avg must be >= 1");
    RankPlan plan;
    plan.kind = PlanKind::linear;
    plan.r_start = r_start;
    plan.r_end = r_end;
    plan.budget_avg = budget_avg;
    plan.ranks = apportion_linear(layers, r_start, r_end, static_cast<long>(layers) * budget_avg);
    if (std::any_of(plan.ranks.begin(), plan.ranks.end(), [](int r) { return r < 1; })) {
        throw BudgetError("budget_avg " + std::to_string(budget_avg) + " is too small for every layer to get rank >= 1");
    }
    return plan;
}

RankPlan deberta_preset() {
    RankPlan plan;
    plan.kind = PlanKind::preset;
    plan.ranks = {4, 5, 6, 6, 7, 8, 8, 9, 10, 10, 11, 12};
    plan.r_start = 4;
    plan.r_end = 12;
    plan.budget_avg = 8;
    return plan;
}

RankPlan uniform_plan(int layers, int rank) {
    if (layers < 1 || rank < 1) throw ParameterError("uniform plan needs layers >= 1 and rank >= 1");
    RankPlan plan;
    plan.kind = PlanKind::uniform;
    plan.ranks.assign(static_cast<std::size_t>(layers), rank);
    plan.r_start = plan.r_end = rank;
    plan.budget_avg = rank;
    return plan;
}

RankPlan inverted_plan(int layers, int r_start, int r_end) {
    RankPlan plan = linear_plan(layers, r_start, r_end);
    std::reverse(plan.ranks.begin(), plan.ranks.end());
    plan.kind = PlanKind::inverted;
    return plan;
}

RankPlan concentrated_plan(int layers, int r_last) {
    if (layers < 1 || r_last < 1) throw ParameterError("concentrated plan needs layers >= 1 and r_last >= 1");
    RankPlan plan;
    plan.kind = PlanKind::concentrated;
    plan.ranks.assign(static_cast<std::size_t>(layers), 0);
    plan.ranks.back() = r_last;
    plan.r_start = 0;
    plan.r_end = r_last;
    if (r_last % layers == 0) plan.budget_avg = r_last / layers;
    return plan;
}

RankPlan explicit_plan(std::vector<int> ranks) {
    RankPlan plan;
    plan.kind = PlanKind::explicit_list;
    plan.ranks = std::move(ranks);
    if (!plan.ranks.empty()) {
        plan.r_start = plan.ranks.front();
        plan.r_end = plan.ranks.back();
        if (plan.total() % static_cast<long>(plan.layers()) == 0) {
            plan.budget_avg = static_cast<int>(plan.total() / static_cast<long>(plan.layers()));
        }
    }
    plan.validate();
    return plan;
}

}  // namespace prilora
