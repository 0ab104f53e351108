#include "prilora/rng.hpp"

#include <cmath>
#include <numbers>

#include "prilora/errors.hpp"

namespace prilora {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) noexcept
    : seed_(seed), stream_(stream), key_(mix64(mix64(seed + kGolden) ^ (stream * 0xD1B54A32D192ED03ull + 1))) {}

Rng Rng::fork(std::uint64_t stream) const noexcept { return Rng(seed_, mix64(stream_ + kGolden) ^ stream); }

std::uint64_t Rng::at(std::uint64_t index) const noexcept {
    // Two rounds of the splitmix finalizer over (key, index).
    return mix64(mix64(key_ ^ (index * kGolden)) + key_);
}

std::uint64_t Rng::next_u64() noexcept { return at(counter_++); }

double Rng::uniform() noexcept { return to_unit(next_u64()); }

std::uint64_t Rng::below(std::uint64_t n) noexcept {
    // Rejection sampling keeps the result exactly uniform.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
}

double Rng::normal_at(std::uint64_t index) const noexcept {
    // Box-Muller on two sub-draws derived from one counter position.
    const std::uint64_t base = at(index);
    const double u1 = 1.0 - to_unit(mix64(base ^ 0x5851F42D4C957F2Dull));  // (0, 1]
    const double u2 = to_unit(mix64(base + kGolden));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal() noexcept { return normal_at(counter_++); }

Tensor gaussian(Rng& rng, Shape shape, double mean, double std) {
    if (!(std >= 0.0) || !std::isfinite(std)) {
        throw ParameterError("gaussian: std must be finite and >= 0, got " + std::to_string(std));
    }
    Tensor t(std::move(shape));
    const auto base = rng.counter();
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = mean + std * rng.normal_at(base + i);
    rng.skip(t.numel());
    return t;
}

}  // namespace prilora
