#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "prilora/adapter.hpp"
#include "prilora/errors.hpp"
#include "prilora/rank_plan.hpp"

using namespace prilora;

namespace {

// Independent largest-remainder apportionment over exact rationals. The
// ideal rank of layer i (0-based) is r_s + (r_f - r_s) i / (L - 1), scaled so
// that the ideals sum to `total`; everything is kept as integer numerators
// over one common denominator.
std::vector<int> oracle(int L, int rs, int rf, long total) {
    // ideal_i * den = (rs (L-1) + (rf-rs) i) * total ; den = (L-1) * sum_i(...)
    std::vector<long> weight(L);
    for (int i = 0; i < L; ++i) weight[i] = static_cast<long>(rs) * (L - 1) + static_cast<long>(rf - rs) * i;
    const long wsum = std::accumulate(weight.begin(), weight.end(), 0L);
    std::vector<int> out(L);
    std::vector<std::pair<long, int>> rem;  // (remainder numerator, index)
    long assigned = 0;
    for (int i = 0; i < L; ++i) {
        const long num = weight[i] * total;
        out[i] = static_cast<int>(num / wsum);
        assigned += out[i];
        rem.emplace_back(num % wsum, i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
    for (long k = 0; k < total - assigned; ++k) ++out[rem[static_cast<std::size_t>(k)].second];
    return out;
}

}  // namespace

TEST_CASE("linear plan examples") {
    CHECK(linear_plan(2, 4, 12).ranks == std::vector<int>{4, 12});
    CHECK(linear_plan(12, 4, 12).ranks == std::vector<int>{4, 5, 5, 6, 7, 8, 8, 9, 10, 11, 11, 12});
    CHECK(linear_plan(12, 4, 12).total() == 96);
    CHECK(linear_plan(3, 8, 8).ranks == std::vector<int>{8, 8, 8});
}

TEST_CASE("linear plan errors") {
    CHECK_THROWS_AS(linear_plan(12, 4, 11), BudgetError);
    CHECK_THROWS_AS(linear_plan(1, 4, 12), ParameterError);
    CHECK_THROWS_AS(linear_plan(4, 0, 2), ParameterError);
    CHECK_NOTHROW(linear_plan(12, 4, 11, 8));
    CHECK(linear_plan(12, 4, 11, 8).total() == 96);
}

TEST_CASE("linear plan agrees with the rational oracle") {
    for (int L = 2; L <= 16; ++L)
        for (int rs = 1; rs <= 8; ++rs)
            for (int rf = rs; rf <= 20; rf += 1) {
                if ((rs + rf) % 2 != 0) continue;
                const RankPlan p = linear_plan(L, rs, rf);
                const long total = static_cast<long>(L) * (rs + rf) / 2;
                CHECK(p.total() == total);
                CHECK(p.ranks == oracle(L, rs, rf, total));
                CHECK(std::is_sorted(p.ranks.begin(), p.ranks.end()));
                RankPlan inv = inverted_plan(L, rs, rf);
                std::reverse(inv.ranks.begin(), inv.ranks.end());
                CHECK(inv.ranks == p.ranks);
            }
    for (int L = 2; L <= 12; ++L) CHECK(linear_plan(L, 5, 5).ranks == uniform_plan(L, 5).ranks);
}

TEST_CASE("preset") {
    const RankPlan p = deberta_preset();
    CHECK(p.ranks == std::vector<int>{4, 5, 6, 6, 7, 8, 8, 9, 10, 10, 11, 12});
    CHECK(p.total() == 96);
    CHECK(p.budget_avg == 8);
    CHECK(p.ranks.front() == 4);
    CHECK(p.ranks.back() == 12);
    CHECK(p.total() == uniform_plan(12, 8).total());
}

TEST_CASE("uniform, inverted and concentrated plans") {
    CHECK(uniform_plan(12, 8).ranks == std::vector<int>(12, 8));
    CHECK(uniform_plan(1, 5).ranks == std::vector<int>{5});
    CHECK(uniform_plan(12, 8).total() == linear_plan(12, 4, 12).total());
    CHECK(inverted_plan(2, 4, 12).ranks == std::vector<int>{12, 4});
    CHECK(inverted_plan(12, 4, 12).total() == 96);

    const RankPlan c = concentrated_plan(12, 24);
    std::vector<int> expect(11, 0);
    expect.push_back(24);
    CHECK(c.ranks == expect);
    CHECK(c.adapted_layers() == 1);
    CHECK(concentrated_plan(1, 24).ranks == std::vector<int>{24});
    CHECK_THROWS(concentrated_plan(3, 0));
}

TEST_CASE("explicit plan keeps the caller's ranks") {
    const RankPlan p = explicit_plan({3, 1, 4});
    CHECK(p.ranks == std::vector<int>{3, 1, 4});
    CHECK(p.kind == PlanKind::explicit_list);
}

TEST_CASE("plan kind names round-trip") {
    for (auto k : {PlanKind::linear, PlanKind::uniform, PlanKind::inverted, PlanKind::concentrated, PlanKind::preset,
                   PlanKind::explicit_list})
        CHECK(plan_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(plan_kind_from_string("spiral"), ConfigError);
}

TEST_CASE("trainable parameter parity") {
    const std::vector<MatrixShape> shapes{{768, 768}, {768, 768}, {768, 768}, {768, 768}, {3072, 768}, {768, 3072}};
    CHECK(trainable_param_count(deberta_preset(), shapes) == trainable_param_count(uniform_plan(12, 8), shapes));
    CHECK(trainable_param_count(linear_plan(12, 4, 12), shapes) == trainable_param_count(uniform_plan(12, 8), shapes));
    const std::vector<MatrixShape> one{{4, 6}};
    CHECK(trainable_param_count(explicit_plan({2}), one) == 20);
    const std::vector<MatrixShape> small{{8, 8}};
    CHECK_THROWS_AS(trainable_param_count(concentrated_plan(1, 24), small), RankError);
}
