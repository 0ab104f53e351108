#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "prilora/adapter.hpp"
#include "prilora/autodiff.hpp"
#include "prilora/prune.hpp"
#include "prilora/rank_plan.hpp"
#include "prilora/task.hpp"

namespace prilora {

/// The six linear maps of an encoder block.
enum class MatrixKind : int { q = 0, k, v, o, ffn1, ffn2 };
inline constexpr std::size_t kMatricesPerBlock = 6;
inline constexpr std::array<MatrixKind, kMatricesPerBlock> kAllMatrixKinds = {
    MatrixKind::q, MatrixKind::k, MatrixKind::v, MatrixKind::o, MatrixKind::ffn1, MatrixKind::ffn2};

std::string to_string(MatrixKind kind);
MatrixKind matrix_kind_from_string(const std::string& name);

struct ModelDims {
    int layers = 2;
    int d_model = 32;
    int heads = 2;
    int d_ff = 64;
    int vocab = 8;
    int seq_len = 9;
    int outputs = 2;

    void validate() const;
    MatrixShape shape_of(MatrixKind kind) const;
    std::vector<MatrixShape> block_shapes(const std::set<MatrixKind>& adapted) const;
};

struct AdapterSettings {
    double init_std = 0.02;
    /// Update multiplier is alpha / r; unset means a multiplier of 1.
    std::optional<double> alpha;
    std::set<MatrixKind> adapted{kAllMatrixKinds.begin(), kAllMatrixKinds.end()};
};

struct AdapterSlot {
    std::size_t layer = 0;
    MatrixKind kind = MatrixKind::q;
};

/// Post-LN transformer encoder classifier with a frozen random base.
///
/// Adapters live in a flat vector in (layer, matrix kind) order; `slots`
/// and `adapter_index` map between that order and block positions. Each
/// adapter owns two moving averages: of its input (for pruning A) and of
/// its r-dimensional latent A x (for the B-pruning controls).
struct ToyModel {
    ModelDims dims;
    RankPlan plan;
    Tensor token_embedding;     // [vocab x d]
    Tensor position_embedding;  // [seq x d]
    std::vector<std::array<FrozenLinear, kMatricesPerBlock>> blocks;

    std::vector<AdapterPair> adapters;
    std::vector<AdapterSlot> slots;
    std::vector<std::array<int, kMatricesPerBlock>> adapter_index;  // -1 = none
    std::vector<EmaState> input_ema;
    std::vector<EmaState> latent_ema;

    Tensor head_weight;  // [outputs x d], trainable
    Tensor head_bias;    // [outputs], trainable

    /// Trainable tensors in the fixed order A0, B0, A1, B1, ..., head W, head b.
    std::vector<Tensor*> trainable();
    std::vector<const Tensor*> trainable() const;
    long adapter_param_count() const;
};

struct ModelInit {
    ModelDims dims;
    RankPlan plan;
    AdapterSettings adapter;
    PruneConfig prune;  // EMA decay and initialization
    /// Seeds the frozen base (the stand-in for pre-trained weights).
    std::uint64_t base_seed = 1;
    /// Seeds adapter initialization.
    std::uint64_t seed = 1;
};

/// Throws ConfigError on plan/depth mismatch and RankError when a rank
/// exceeds a matrix's smaller side.
ToyModel build_model(const ModelInit& init);

struct Batch {
    std::size_t size = 0;
    std::vector<int> tokens;  // size * seq_len
    std::vector<int> labels;
    std::vector<double> targets;
};

Batch make_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices);
Batch make_batch(const std::vector<Sample>& samples);

/// Nodes of one forward pass, enough for backward and statistic collection.
struct ForwardPass {
    ad::Var loss;
    ad::Var output;
    std::vector<ad::Var> params;         // same order as ToyModel::trainable()
    std::vector<ad::Var> adapter_input;  // per adapter
    std::vector<ad::Var> adapter_latent; // per adapter
    std::vector<ad::Var> frozen;         // every frozen tensor
};

/// Builds the tape for a batch. `classification` selects softmax
/// cross-entropy, otherwise mean squared error on a single output.
ForwardPass forward_pass(ad::Graph& g, const ToyModel& model, const Batch& batch, bool classification);

}  // namespace prilora
