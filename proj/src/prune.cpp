#include "prilora/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prilora/errors.hpp"

namespace prilora {

std::string to_string(PruneStrategy s) {
    switch (s) {
        case PruneStrategy::prilora_A: return "prilora_A";
        case PruneStrategy::random_A_cols: return "random_A_cols";
        case PruneStrategy::B_rows: return "B_rows";
        case PruneStrategy::B_cols: return "B_cols";
        case PruneStrategy::none: return "none";
    }
    return "none";
}

PruneStrategy prune_strategy_from_string(const std::string& name) {
    if (name == "prilora_A") return PruneStrategy::prilora_A;
    if (name == "random_A_cols") return PruneStrategy::random_A_cols;
    if (name == "B_rows") return PruneStrategy::B_rows;
    if (name == "B_cols") return PruneStrategy::B_cols;
    if (name == "none") return PruneStrategy::none;
    throw ConfigError("unknown prune strategy '" + name + "'");
}

void PruneConfig::validate() const {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("prune ratio must lie in [0, 1]");
    if (interval_steps < 1) throw ConfigError("prune interval must be a positive step count");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("ema decay must lie in (0, 1)");
}

std::size_t PruneMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::size_t PruneMask::row_count(std::size_t i) const noexcept {
    const auto first = bits.begin() + static_cast<std::ptrdiff_t>(i * cols);
    return static_cast<std::size_t>(std::count(first, first + static_cast<std::ptrdiff_t>(cols), std::uint8_t{1}));
}

std::vector<double> batch_input_norm(const Tensor& x) {
    if (x.rank() != 2 && x.rank() != 3) {
        throw DimensionError("batch_input_norm: expected [b x n x d] or [n x d], got " + shape_string(x.shape()));
    }
    const std::size_t d = x.shape().back();
    std::vector<double> acc(d, 0.0);
    const auto data = x.data();
    for (std::size_t i = 0; i < data.size(); i += d) {
        for (std::size_t j = 0; j < d; ++j) acc[j] += data[i + j] * data[i + j];
    }
    for (auto& v : acc) v = std::sqrt(v);
    return acc;
}

void ema_update_inplace(EmaState& state, std::span<const double> x) {
    if (x.size() != state.xbar.size()) {
        throw DimensionError("ema_update: input width " + std::to_string(x.size()) + " != state width " +
                             std::to_string(state.xbar.size()));
    }
    for (double v : x) {
        if (!(v >= 0.0)) throw ParameterError("ema_update: input norms must be non-negative");
    }
    if (state.copy_first && state.updates == 0) {
        std::copy(x.begin(), x.end(), state.xbar.begin());
    } else {
        const double w = state.update_weight();
        for (std::size_t j = 0; j < x.size(); ++j) state.xbar[j] = state.decay * state.xbar[j] + w * x[j];
    }
    ++state.updates;
}

EmaState ema_update(EmaState state, std::span<const double> x) {
    ema_update_inplace(state, x);
    return state;
}

Tensor importance(const Tensor& A, std::span<const double> xbar) {
    if (A.rank() != 2 || A.cols() != xbar.size()) {
        throw DimensionError("importance: matrix " + shape_string(A.shape()) + " vs statistics of width " +
                             std::to_string(xbar.size()));
    }
    Tensor S({A.rows(), A.cols()});
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) S(i, j) = std::abs(A(i, j)) * xbar[j];
    return S;
}

std::size_t prune_count(double ratio, std::size_t width) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ParameterError("prune ratio must lie in [0, 1]");
    return std::min(width, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(width))));
}

PruneMask build_mask(const Tensor& S, double ratio, long event_step) {
    if (S.rank() != 2) throw DimensionError("build_mask: expected a matrix, got " + shape_string(S.shape()));
    const std::size_t rows = S.rows(), cols = S.cols();
    const std::size_t n = prune_count(ratio, cols);
    PruneMask mask{rows, cols, std::vector<std::uint8_t>(rows * cols, 0), event_step};
    if (n == 0) return mask;
    std::vector<std::size_t> idx(cols);
    for (std::size_t i = 0; i < rows; ++i) {
        auto r = S.row(i);
        std::iota(idx.begin(), idx.end(), 0);
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                          [&](std::size_t a, std::size_t b) { return r[a] < r[b] || (r[a] == r[b] && a < b); });
        for (std::size_t k = 0; k < n; ++k) mask.bits[i * cols + idx[k]] = 1;
    }
    return mask;
}

long apply_mask_inplace(Tensor& A, const PruneMask& mask) {
    if (A.rank() != 2 || A.rows() != mask.rows || A.cols() != mask.cols) {
        throw DimensionError("apply_mask: matrix " + shape_string(A.shape()) + " vs mask [" +
                             std::to_string(mask.rows) + "x" + std::to_string(mask.cols) + "]");
    }
    long written = 0;
    for (std::size_t k = 0; k < mask.bits.size(); ++k) {
        if (mask.bits[k]) {
            A[k] = 0.0;
            ++written;
        }
    }
    return written;
}

Tensor apply_mask(const Tensor& A, const PruneMask& mask) {
    Tensor out = A;
    apply_mask_inplace(out, mask);
    return out;
}

bool should_prune(long step, const PruneConfig& cfg) {
    if (step < 0) throw ParameterError("should_prune: negative step");
    if (cfg.interval_steps < 1) throw ConfigError("prune interval must be a positive step count");
    return cfg.strategy != PruneStrategy::none && step > 0 && step % cfg.interval_steps == 0;
}

long prune_adapter_A(AdapterPair& adapter, const EmaState& input_ema, double ratio, long step) {
    const PruneMask mask = build_mask(importance(adapter.A, input_ema.xbar), ratio, step);
    return apply_mask_inplace(adapter.A, mask);
}

namespace {

long prune_random_columns(Tensor& A, double ratio, Rng& rng) {
    const std::size_t cols = A.cols();
    const std::size_t n = prune_count(ratio, cols);
    std::vector<std::size_t> idx(cols);
    long written = 0;
    for (std::size_t i = 0; i < A.rows(); ++i) {
        std::iota(idx.begin(), idx.end(), 0);
        // Partial Fisher-Yates: the first n slots are a uniform n-subset.
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t pick = k + static_cast<std::size_t>(rng.below(cols - k));
            std::swap(idx[k], idx[pick]);
            A(i, idx[k]) = 0.0;
            ++written;
        }
    }
    return written;
}

}  // namespace

long ablation_prune(AdapterPair& adapter, const EmaState& latent_ema, const PruneConfig& cfg, Rng& rng) {
    switch (cfg.strategy) {
        case PruneStrategy::random_A_cols:
            return prune_random_columns(adapter.A, cfg.ratio, rng);
        case PruneStrategy::B_rows: {
            const PruneMask mask = build_mask(importance(adapter.B, latent_ema.xbar), cfg.ratio);
            return apply_mask_inplace(adapter.B, mask);
        }
        case PruneStrategy::B_cols: {
            // Column-wise selection is row-wise selection on the transpose.
            const Tensor St = transpose(importance(adapter.B, latent_ema.xbar));
            const PruneMask mt = build_mask(St, cfg.ratio);
            long written = 0;
            for (std::size_t j = 0; j < mt.rows; ++j)
                for (std::size_t i = 0; i < mt.cols; ++i)
                    if (mt.at(j, i)) {
                        adapter.B(i, j) = 0.0;
                        ++written;
                    }
            return written;
        }
        case PruneStrategy::prilora_A:
        case PruneStrategy::none:
            break;
    }
    throw ConfigError("ablation_prune: strategy " + to_string(cfg.strategy) + " is not an ablation control");
}

}  // namespace prilora
