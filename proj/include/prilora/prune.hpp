#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prilora/adapter.hpp"
#include "prilora/rng.hpp"
#include "prilora/tensor.hpp"

namespace prilora {

enum class PruneStrategy { prilora_A, random_A_cols, B_rows, B_cols, none };

std::string to_string(PruneStrategy s);
PruneStrategy prune_strategy_from_string(const std::string& name);

struct PruneConfig {
    double ratio = 0.5;
    long interval_steps = 40;
    PruneStrategy strategy = PruneStrategy::prilora_A;
    double ema_decay = 0.9;
    /// Seed the average with the first observed batch instead of zeros.
    bool ema_copy_first = false;

    /// Throws ConfigError on out-of-range fields.
    void validate() const;
};

/// Exponential moving average of per-feature input norms for one matrix.
struct EmaState {
    std::vector<double> xbar;
    double decay = 0.9;
    bool copy_first = false;
    long updates = 0;

    EmaState() = default;
    EmaState(std::size_t width, double decay, bool copy_first = false)
        : xbar(width, 0.0), decay(decay), copy_first(copy_first) {}

    double update_weight() const noexcept { return 1.0 - decay; }
    friend bool operator==(const EmaState&, const EmaState&) = default;
};

/// Binary r x d2 mask; a set bit marks an entry zeroed at the event.
struct PruneMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> bits;
    long event_step = 0;

    bool at(std::size_t i, std::size_t j) const noexcept { return bits[i * cols + j] != 0; }
    std::size_t count() const noexcept;
    std::size_t row_count(std::size_t i) const noexcept;
};

/// Per-feature L2 norm over every leading axis. Accepts [b x n x d] and
/// [rows x d] (treated as b = 1); other ranks raise DimensionError.
std::vector<double> batch_input_norm(const Tensor& x);

/// xbar' = decay * xbar + (1 - decay) * x.
EmaState ema_update(EmaState state, std::span<const double> x);
void ema_update_inplace(EmaState& state, std::span<const double> x);

/// S_ij = |A_ij| * xbar_j.
Tensor importance(const Tensor& A, std::span<const double> xbar);

/// Marks the floor(ratio * cols) smallest entries of every row of S; among
/// equal scores the lower column index is taken first.
PruneMask build_mask(const Tensor& S, double ratio, long event_step = 0);

Tensor apply_mask(const Tensor& A, const PruneMask& mask);
/// Zeroes masked entries in place and returns how many were written.
long apply_mask_inplace(Tensor& A, const PruneMask& mask);

/// True on every positive multiple of the interval unless the strategy is none.
bool should_prune(long step, const PruneConfig& cfg);

/// n = floor(ratio * width), the per-row prune count.
std::size_t prune_count(double ratio, std::size_t width);

/// Importance-based pruning of A from its input statistics. Returns zeros written.
long prune_adapter_A(AdapterPair& adapter, const EmaState& input_ema, double ratio, long step = 0);

/// Control strategies: random columns of A, or importance over B's rows or
/// columns using the moving average of B's r-dimensional input. `latent_ema`
/// is ignored by random_A_cols; `rng` is used only by it.
/// Throws ConfigError for strategies other than the three controls.
long ablation_prune(AdapterPair& adapter, const EmaState& latent_ema, const PruneConfig& cfg, Rng& rng);

}  // namespace prilora
