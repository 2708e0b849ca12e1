#include "ptycho/rng.hpp"

#include <cmath>

namespace ptycho {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stirling-series ln(k!), accurate to ~1e-12 for k >= 10; exact table below.
double ln_factorial(double k) {
    static const double table[] = {0.0,
                                   0.0,
                                   0.693147180559945309,
                                   1.791759469228055001,
                                   3.178053830347945620,
                                   4.787491742782045994,
                                   6.579251212010100995,
                                   8.525161361065414300,
                                   10.604602902745250228,
                                   12.801827480081469611};
    if (k < 10.0) return table[static_cast<int>(k)];
    const double x = k + 1.0;
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // ln Gamma(x) asymptotic series
    double series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    return 0.5 * std::log(2.0 * 3.14159265358979323846) + (x - 0.5) * std::log(x) - x + series;
}

} // namespace

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

Rng::Rng(std::uint64_t seed, std::string_view label, std::uint64_t index) {
    std::uint64_t h = fnv1a64(label);
    h = fnv1a64(&index, sizeof(index), h);
    std::uint64_t mix = seed ^ h;
    // burn two rounds so adjacent (seed, index) pairs decorrelate
    splitmix64(mix);
    splitmix64(mix);
    state_ = mix;
}

Rng Rng::derive(std::string_view label, std::uint64_t index) const {
    return Rng(state_, label, index);
}

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
    // 53 random bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) return 0;
    // rejection to avoid modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (have_cached_normal_) {
        have_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    cached_normal_ = r * std::sin(a);
    have_cached_normal_ = true;
    return r * std::cos(a);
}

std::int64_t Rng::poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    if (lambda < 10.0) {
        // inversion by sequential search on the CDF
        const double l = std::exp(-lambda);
        double p = l;
        double cdf = p;
        const double u = uniform();
        std::int64_t k = 0;
        while (u > cdf && k < 1000) {
            ++k;
            p *= lambda / static_cast<double>(k);
            cdf += p;
        }
        return k;
    }
    // PTRS transformed rejection (Hormann 1993)
    const double b = 0.931 + 2.53 * std::sqrt(lambda);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        double u = uniform() - 0.5;
        double v = uniform();
        const double us = 0.5 - std::fabs(u);
        const double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
        if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(kf);
        if (kf < 0.0 || (us < 0.013 && v > us)) continue;
        const double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
        const double rhs = -lambda + kf * std::log(lambda) - ln_factorial(kf);
        if (lhs <= rhs) return static_cast<std::int64_t>(kf);
    }
}

} // namespace ptycho
