#pragma once

#include <cstdint>

#include "prilora/tensor.hpp"

namespace prilora {

/// Counter-based generator: the i-th draw is a pure function of
/// (seed, stream, i), so fills can be split across workers and still match a
/// sequential fill bit for bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }

    /// Independent generator keyed on the same seed and a derived stream id.
    Rng fork(std::uint64_t stream) const noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;
    double normal() noexcept;

    /// Value at an absolute counter position without advancing.
    std::uint64_t at(std::uint64_t index) const noexcept;
    double normal_at(std::uint64_t index) const noexcept;

    void skip(std::uint64_t n) noexcept { counter_ += n; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// i.i.d. N(mean, std^2) samples. Throws ParameterError when std < 0.
Tensor gaussian(Rng& rng, Shape shape, double mean, double std);

}  // namespace prilora
