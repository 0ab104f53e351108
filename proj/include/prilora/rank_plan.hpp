#pragma once

#include <optional>
#include <string>
#include <vector>

namespace prilora {

enum class PlanKind { linear, uniform, inverted, concentrated, preset, explicit_list };

std::string to_string(PlanKind kind);
PlanKind plan_kind_from_string(const std::string& name);

/// Per-layer adapter ranks. A rank of 0 means the layer carries no adapter.
struct RankPlan {
    PlanKind kind = PlanKind::explicit_list;
    std::vector<int> ranks;
    int r_start = 0;
    int r_end = 0;
    /// Target mean rank; total() == layers() * budget_avg whenever set.
    std::optional<int> budget_avg;

    std::size_t layers() const noexcept { return ranks.size(); }
    long total() const noexcept;
    std::size_t adapted_layers() const noexcept;

    /// Throws BudgetError or ParameterError when an invariant is broken.
    void validate() const;

    friend bool operator==(const RankPlan&, const RankPlan&) = default;
};

/// Linear interpolation r_s -> r_f over L layers, apportioned with the
/// largest-remainder rule so the ranks sum to exactly L * (r_s + r_f) / 2.
/// Remainder ties go to the lower layer index.
///
/// Throws ParameterError for L < 2 or r_s outside [1, r_f], and BudgetError
/// when r_s + r_f is odd; pass budget_avg explicitly in that case.
RankPlan linear_plan(int layers, int r_start, int r_end);

/// Same interpolation profile, apportioned to a total of L * budget_avg.
RankPlan linear_plan(int layers, int r_start, int r_end, int budget_avg);

/// The published 12-layer schedule (4,5,6,6,7,8,8,9,10,10,11,12), mean rank 8.
RankPlan deberta_preset();

RankPlan uniform_plan(int layers, int rank);
RankPlan inverted_plan(int layers, int r_start, int r_end);
/// Adapter only on the last layer; earlier layers get rank 0.
RankPlan concentrated_plan(int layers, int r_last);
/// Caller-supplied ranks; budget_avg is set when the sum divides evenly.
RankPlan explicit_plan(std::vector<int> ranks);

}  // namespace prilora
