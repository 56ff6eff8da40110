#pragma once

#include <cstdint>
#include <random>

namespace ulab {

/// Seeded generator with platform-independent draws.
///
/// The standard distributions are implementation-defined, so uniform, normal and
/// bounded-integer draws are derived here directly from the 64-bit engine output.
/// Copying an Rng copies its full state.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the spare variate is cached.
    double normal();

    /// Uniform integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n);

    bool operator==(const Rng&) const = default;

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Mixes a base seed with a stream tag into an independent child seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace ulab
