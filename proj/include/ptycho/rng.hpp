#pragma once

#include <cstdint>
#include <string_view>

namespace ptycho {

// Counter-based PRNG built on splitmix64. Every draw is a pure function of
// (seed, stream label, counter), so parallel and serial evaluation of the
// same stream agree bit-exactly and sub-streams are independent.
class Rng {
public:
    Rng() = default;
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    Rng(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

    /// Derive an independent sub-stream, e.g. per frame or per epoch.
    Rng derive(std::string_view label, std::uint64_t index = 0) const;

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);
    /// Standard normal via Box-Muller (two uniforms per pair, cached).
    double normal();
    double normal(double mean, double sigma) { return mean + sigma * normal(); }
    /// Poisson with mean lambda; inversion below 10, PTRS rejection above.
    std::int64_t poisson(double lambda);

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_ = 0x9e3779b97f4a7c15ULL;
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

/// Stable 64-bit FNV-1a over bytes; used for sub-seed labels and manifests.
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view s);

} // namespace ptycho
