#include "prilora/adapter.hpp"

#include <algorithm>

#include "prilora/errors.hpp"

namespace prilora {

namespace {

void check_rank(std::size_t d1, std::size_t d2, int rank) {
    if (rank < 1) throw ParameterError("adapter rank must be >= 1, got " + std::to_string(rank));
    if (static_cast<std::size_t>(rank) > std::min(d1, d2)) {
        throw RankError("adapter rank " + std::to_string(rank) + " exceeds min(d1, d2) of a " + std::to_string(d1) +
                        "x" + std::to_string(d2) + " matrix");
    }
}

// Views x[... x d2] as a matrix [N x d2].
Tensor as_rows(const Tensor& x, std::size_t d2) {
    if (x.shape().back() != d2) {
        throw DimensionError("input " + shape_string(x.shape()) + " does not end in width " + std::to_string(d2));
    }
    return x.reshaped({x.numel() / d2, d2});
}

Tensor restore_leading(const Tensor& rows, const Shape& in_shape) {
    Shape out = in_shape;
    out.back() = rows.cols();
    return rows.reshaped(std::move(out));
}

void add_bias_rows(Tensor& h, const std::optional<Tensor>& bias) {
    if (!bias) return;
    for (std::size_t i = 0; i < h.rows(); ++i) {
        auto r = h.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += (*bias)[j];
    }
}

}  // namespace

AdapterPair init_adapter(std::size_t d1, std::size_t d2, int rank, Rng& rng, double std, double scale,
                         std::string frozen_ref) {
    check_rank(d1, d2, rank);
    if (!(std > 0.0)) throw ParameterError("adapter init std must be > 0");
    AdapterPair p;
    p.frozen_ref = std::move(frozen_ref);
    p.rank = rank;
    p.scale = scale;
    p.A = gaussian(rng, {static_cast<std::size_t>(rank), d2}, 0.0, std);
    p.B = Tensor::zeros({d1, static_cast<std::size_t>(rank)});
    return p;
}

Tensor frozen_forward(const FrozenLinear& layer, const Tensor& x) {
    Tensor h = matmul_nt(as_rows(x, layer.weight.cols()), layer.weight);
    add_bias_rows(h, layer.bias);
    return restore_leading(h, x.shape());
}

Tensor forward(const FrozenLinear& layer, const AdapterPair& adapter, const Tensor& x) {
    if (adapter.shape() != layer.shape()) throw DimensionError("adapter shape does not match its frozen layer");
    const Tensor rows = as_rows(x, layer.weight.cols());
    Tensor h = matmul_nt(rows, layer.weight);
    const Tensor update = matmul_nt(matmul_nt(rows, adapter.A), adapter.B);
    axpy(adapter.scale, update, h);
    add_bias_rows(h, layer.bias);
    return restore_leading(h, x.shape());
}

FrozenLinear merge(const FrozenLinear& layer, const AdapterPair& adapter) {
    if (adapter.shape() != layer.shape()) throw DimensionError("adapter shape does not match its frozen layer");
    FrozenLinear merged = layer;
    axpy(adapter.scale, matmul(adapter.B, adapter.A), merged.weight);
    return merged;
}

ad::Var forward(ad::Graph& g, const AdaptedLinearVars& vars, ad::Var x, std::optional<ad::Var>* latent) {
    ad::Var h = ad::matmul_nt(g, x, vars.weight);
    if (vars.A && vars.B) {
        const ad::Var z = ad::matmul_nt(g, x, *vars.A);
        if (latent) *latent = z;
        ad::Var update = ad::matmul_nt(g, z, *vars.B);
        if (vars.scale != 1.0) update = ad::scale(g, update, vars.scale);
        h = ad::add(g, h, update);
    }
    if (vars.bias) h = ad::add_bias(g, h, *vars.bias);
    return h;
}

long trainable_param_count(const RankPlan& plan, std::span<const MatrixShape> per_layer_shapes) {
    std::vector<std::vector<MatrixShape>> layers(plan.layers(),
                                                 std::vector<MatrixShape>(per_layer_shapes.begin(), per_layer_shapes.end()));
    return trainable_param_count(plan, std::span<const std::vector<MatrixShape>>(layers));
}

long trainable_param_count(const RankPlan& plan, std::span<const std::vector<MatrixShape>> layer_shapes) {
    if (layer_shapes.size() != plan.layers()) {
        throw DimensionError("plan has " + std::to_string(plan.layers()) + " layers, shapes given for " +
                             std::to_string(layer_shapes.size()));
    }
    long count = 0;
    for (std::size_t l = 0; l < plan.layers(); ++l) {
        const int r = plan.ranks[l];
        if (r == 0) continue;
        for (const auto& s : layer_shapes[l]) {
            check_rank(s.d1, s.d2, r);
            count += static_cast<long>(r) * static_cast<long>(s.d1 + s.d2);
        }
    }
    return count;
}

long nonzero_param_count(std::span<const AdapterPair> adapters) {
    long n = 0;
    for (const auto& a : adapters) n += static_cast<long>(count_nonzero(a.A) + count_nonzero(a.B));
    return n;
}

}  // namespace prilora
