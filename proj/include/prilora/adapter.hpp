#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prilora/autodiff.hpp"
#include "prilora/rank_plan.hpp"
#include "prilora/rng.hpp"
#include "prilora/tensor.hpp"

namespace prilora {

struct MatrixShape {
    std::size_t d1 = 0;  // output width
    std::size_t d2 = 0;  // input width
    friend bool operator==(const MatrixShape&, const MatrixShape&) = default;
};

/// A pre-trained linear map h = W0 x + bias that is never updated.
struct FrozenLinear {
    std::string ref;
    Tensor weight;  // [d1 x d2]
    std::optional<Tensor> bias;  // [d1]

    MatrixShape shape() const { return {weight.rows(), weight.cols()}; }
};

/// Trainable low-rank update scale * B * A for one frozen matrix.
struct AdapterPair {
    std::string frozen_ref;
    Tensor A;  // [r x d2]
    Tensor B;  // [d1 x r]
    int rank = 0;
    double scale = 1.0;

    MatrixShape shape() const { return {B.rows(), A.cols()}; }
    std::size_t param_count() const noexcept { return A.numel() + B.numel(); }
};

/// A ~ N(0, std^2), B = 0, so the adapted layer starts out identical to the
/// frozen one. Throws RankError when r > min(d1, d2).
AdapterPair init_adapter(std::size_t d1, std::size_t d2, int rank, Rng& rng, double std, double scale,
                         std::string frozen_ref = {});

/// x is [... x d2]; returns [... x d1].
Tensor frozen_forward(const FrozenLinear& layer, const Tensor& x);
/// W0 x + scale * B (A x) + bias, evaluated through the factored path.
Tensor forward(const FrozenLinear& layer, const AdapterPair& adapter, const Tensor& x);
/// Folds scale * B * A into the weight.
FrozenLinear merge(const FrozenLinear& layer, const AdapterPair& adapter);

/// Graph nodes for one adapted linear map over row-major inputs [N x d2].
struct AdaptedLinearVars {
    ad::Var weight;
    std::optional<ad::Var> bias;
    std::optional<ad::Var> A;
    std::optional<ad::Var> B;
    double scale = 1.0;
};

/// Returns the output node; when `latent` is given it receives the [N x r]
/// node A x, which is the input seen by B.
ad::Var forward(ad::Graph& g, const AdaptedLinearVars& vars, ad::Var x, std::optional<ad::Var>* latent = nullptr);

/// Sum of r * (d1 + d2) over adapted matrices. Every layer of the plan holds
/// the same set of matrix shapes. Pruned entries are not discounted.
long trainable_param_count(const RankPlan& plan, std::span<const MatrixShape> per_layer_shapes);
/// Per-layer shapes variant; layer_shapes.size() must equal plan.layers().
long trainable_param_count(const RankPlan& plan, std::span<const std::vector<MatrixShape>> layer_shapes);

/// Adapter entries (A and B) whose value is not exactly zero.
long nonzero_param_count(std::span<const AdapterPair> adapters);

}  // namespace prilora
