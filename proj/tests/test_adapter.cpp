#include <doctest.h>

#include <cmath>

#include "prilora/adapter.hpp"
#include "prilora/errors.hpp"
#include "prilora/grad_check.hpp"
#include "prilora/rng.hpp"
#include "test_util.hpp"

using namespace prilora;

namespace {

FrozenLinear random_linear(std::size_t d1, std::size_t d2, Rng& rng) {
    FrozenLinear l;
    l.ref = "w";
    l.weight = gaussian(rng, {d1, d2}, 0.0, 1.0);
    l.bias = gaussian(rng, {d1}, 0.0, 1.0);
    return l;
}

// W x + bias, computed from the explicit merged weight W = W0 + s B A.
Tensor merged_oracle(const FrozenLinear& l, const AdapterPair& a, const Tensor& x) {
    const std::size_t d1 = l.weight.rows(), d2 = l.weight.cols(), r = a.A.rows();
    Tensor w = l.weight;
    for (std::size_t i = 0; i < d1; ++i)
        for (std::size_t j = 0; j < d2; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < r; ++k) s += a.B(i, k) * a.A(k, j);
            w(i, j) += a.scale * s;
        }
    Tensor out({x.rows(), d1});
    for (std::size_t n = 0; n < x.rows(); ++n)
        for (std::size_t i = 0; i < d1; ++i) {
            double s = (*l.bias)[i];
            for (std::size_t j = 0; j < d2; ++j) s += w(i, j) * x(n, j);
            out(n, i) = s;
        }
    return out;
}

}  // namespace

TEST_CASE("init_adapter") {
    Rng rng(1);
    const AdapterPair a = init_adapter(6, 5, 3, rng, 0.02, 1.0, "q");
    CHECK(a.A.shape() == Shape{3, 5});
    CHECK(a.B.shape() == Shape{6, 3});
    CHECK(count_nonzero(a.B) == 0);
    CHECK(a.frozen_ref == "q");

    Rng r1(7), r2(7);
    CHECK(init_adapter(4, 4, 2, r1, 0.02, 1.0).A == init_adapter(4, 4, 2, r2, 0.02, 1.0).A);

    Rng big(3);
    const AdapterPair w = init_adapter(100, 100, 100, big, 0.02, 1.0);
    double ss = 0.0;
    for (double v : w.A.data()) ss += v * v;
    CHECK(std::abs(std::sqrt(ss / 1e4) - 0.02) < 0.002);

    CHECK_THROWS_AS(init_adapter(4, 8, 5, rng, 0.02, 1.0), RankError);
    CHECK_THROWS_AS(init_adapter(4, 8, 2, rng, 0.0, 1.0), ParameterError);
}

TEST_CASE("fresh adapter leaves the layer unchanged") {
    Rng rng(2);
    const FrozenLinear l = random_linear(5, 7, rng);
    const AdapterPair a = init_adapter(5, 7, 3, rng, 0.02, 2.0);
    const Tensor x = gaussian(rng, {4, 7}, 0.0, 1.0);
    CHECK(forward(l, a, x) == frozen_forward(l, x));
    CHECK(merge(l, a).weight == l.weight);
}

TEST_CASE("identity composition keeps the rank subspace") {
    FrozenLinear l;
    l.weight = Tensor::zeros({4, 4});
    AdapterPair a;
    a.rank = 2;
    a.A = Tensor::from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}});
    a.B = Tensor::from_rows({{1, 0}, {0, 1}, {0, 0}, {0, 0}});
    const Tensor x = Tensor::from_rows({{3, -1, 5, 7}});
    CHECK(forward(l, a, x) == Tensor::from_rows({{3, -1, 0, 0}}));
}

TEST_CASE("rank-one ones merge to an all-ones matrix") {
    FrozenLinear l;
    l.weight = Tensor::zeros({3, 4});
    AdapterPair a;
    a.rank = 1;
    a.A = Tensor({1, 4}, 1.0);
    a.B = Tensor({3, 1}, 1.0);
    CHECK(merge(l, a).weight == Tensor({3, 4}, 1.0));
}

TEST_CASE("forward matches the merged-weight oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const FrozenLinear l = random_linear(6, 9, rng);
        AdapterPair a = init_adapter(6, 9, 4, rng, 0.5, 0.7);
        a.B = gaussian(rng, {6, 4}, 0.0, 0.5);
        const FrozenLinear m = merge(l, a);
        for (int k = 0; k < 100; ++k) {
            const Tensor x = gaussian(rng, {1, 9}, 0.0, 1.0);
            const Tensor ref = merged_oracle(l, a, x);
            CHECK(max_abs_diff(forward(l, a, x), ref) < 1e-12);
            CHECK(max_abs_diff(frozen_forward(m, x), ref) < 1e-12);
        }
    }
}

TEST_CASE("forward accepts batch x tokens inputs and rejects bad widths") {
    Rng rng(4);
    const FrozenLinear l = random_linear(3, 5, rng);
    AdapterPair a = init_adapter(3, 5, 2, rng, 0.3, 1.0);
    a.B = gaussian(rng, {3, 2}, 0.0, 1.0);
    const Tensor x = gaussian(rng, {2, 4, 5}, 0.0, 1.0);
    const Tensor y = forward(l, a, x);
    CHECK(y.shape() == Shape{2, 4, 3});
    CHECK(max_abs_diff(y.reshaped({8, 3}), forward(l, a, x.reshaped({8, 5}))) == 0.0);
    CHECK_THROWS_AS(forward(l, a, Tensor({2, 4})), DimensionError);
}

TEST_CASE("adapter gradients through the graph path") {
    Rng rng(5);
    const FrozenLinear l = random_linear(4, 6, rng);
    const Tensor x = gaussian(rng, {5, 6}, 0.0, 1.0);
    const std::vector<Tensor> params{gaussian(rng, {3, 6}, 0.0, 0.5), gaussian(rng, {4, 3}, 0.0, 0.5)};
    const auto f = testutil::graph_function([&](ad::Graph& g, const std::vector<ad::Var>& p) {
        AdaptedLinearVars v{g.constant(l.weight), g.constant(*l.bias), p[0], p[1], 0.8};
        return testutil::contract(g, forward(g, v, g.constant(x)), 99);
    });
    CHECK(grad_check(f, params, 1e-6).max_rel_error < 1e-5);

    // The graph path and the eager path agree.
    AdapterPair a{"w", params[0], params[1], 3, 0.8};
    ad::Graph g;
    AdaptedLinearVars v{g.constant(l.weight), g.constant(*l.bias), g.parameter(a.A), g.parameter(a.B), 0.8};
    std::optional<ad::Var> latent;
    const ad::Var out = forward(g, v, g.constant(x), &latent);
    CHECK(max_abs_diff(g.value(out), forward(l, a, x)) < 1e-12);
    CHECK(max_abs_diff(g.value(*latent), matmul_nt(x, a.A)) < 1e-12);
}

TEST_CASE("parameter counts") {
    const std::vector<MatrixShape> shapes{{4, 6}};
    CHECK(trainable_param_count(explicit_plan({2}), shapes) == 20);

    Rng rng(6);
    std::vector<AdapterPair> adapters{init_adapter(5, 7, 3, rng, 0.02, 1.0), init_adapter(4, 4, 2, rng, 0.02, 1.0)};
    CHECK(nonzero_param_count(adapters) == 3 * 7 + 2 * 4);
    adapters[0].A.fill(0.0);
    adapters[1].A.fill(0.0);
    CHECK(nonzero_param_count(adapters) == 0);
}
