#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "prilora/adapter.hpp"
#include "prilora/optimizer.hpp"
#include "prilora/prune.hpp"
#include "prilora/rank_plan.hpp"

namespace prilora {

struct ToyModel;

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything trainable or stateful in a run; the frozen base is rebuilt
/// from the seed.
///
/// Binary layout, all little-endian: magic "PRLC", u32 version, u64 step,
/// u64 seed, plan (string kind, i64 r_start, i64 r_end, i64 budget or -1,
/// u32 L, i64 ranks), u32 adapter count with per adapter (string ref,
/// u32 rank, f64 scale, tensor A, tensor B), two EMA lists (u32 count;
/// f64 decay, u32 copy_first, u64 updates, tensor xbar), head weight and
/// bias tensors, u64 optimizer steps, u32 moment count and the first then
/// second moments.
struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    long step = 0;
    std::uint64_t seed = 0;
    RankPlan plan;
    std::vector<AdapterPair> adapters;
    std::vector<EmaState> input_ema;
    std::vector<EmaState> latent_ema;
    Tensor head_weight;
    Tensor head_bias;
    long optimizer_steps = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;

    friend bool operator==(const Checkpoint&, const Checkpoint&);
};

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture(const ToyModel& model, const Optimizer& optimizer, long step, std::uint64_t seed);
/// Copies trainable and stateful tensors back into a model built from the
/// same configuration. Throws FormatError on any structural mismatch.
void restore(ToyModel& model, Optimizer& optimizer, const Checkpoint& ckpt);

}  // namespace prilora
