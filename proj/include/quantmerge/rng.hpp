#ifndef QUANTMERGE_RNG_HPP
#define QUANTMERGE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "quantmerge/errors.hpp"

// Self-contained deterministic randomness. The standard <random>
// distributions are implementation-defined, so every draw here is spelled
// out explicitly: identical seeds give identical streams on any platform.

namespace quantmerge {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// xoshiro256** seeded through splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = detail::splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n), n > 0. Rejection sampling, unbiased.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw InvariantError("Rng::below: n must be positive");
        const std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via inverse CDF, so sampled values and analytic
    /// quantiles come from the same function.
    double normal() { return normal_quantile(uniform_open()); }

    /// Uniform double in (0, 1), never exactly 0 or 1.
    double uniform_open() {
        for (;;) {
            double u = uniform();
            if (u > 0.0) return u;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Inverse standard normal CDF (Wichura's PPND16, AS 241).
    /// Accurate to about 1e-16 relative over (0, 1).
    static double normal_quantile(double p) {
        if (!(p > 0.0 && p < 1.0))
            throw InvariantError("normal_quantile: p must be in (0, 1)");
        const double q = p - 0.5;
        if (std::fabs(q) <= 0.425) {
            const double r = 0.180625 - q * q;
            return q *
                   (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                         6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                       1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                     1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
                   (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                         3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                       5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                     4.2313330701600911252e1) * r + 1.0);
        }
        double r = (q < 0.0) ? p : 1.0 - p;
        r = std::sqrt(-std::log(r));
        double val;
        if (r <= 5.0) {
            r -= 1.6;
            val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                        2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                      3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                    4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
                  (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                        1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                      6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                    2.05319162663775882187e0) * r + 1.0);
        } else {
            r -= 5.0;
            val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                        1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                      2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                    5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
                  (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                        1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                      1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                    5.99832206555887937690e-1) * r + 1.0);
        }
        return (q < 0.0) ? -val : val;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
};

/// Every random stream in a run is derived from one master seed by
/// component name and index; the derivation is the documented contract.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view component,
                                 std::uint64_t index = 0) {
    std::uint64_t state = master ^ detail::fnv1a64(component);
    state += index * 0x9e3779b97f4a7c15ULL;
    std::uint64_t out = detail::splitmix64(state);
    return out ^ detail::splitmix64(state);
}

}  // namespace quantmerge

#endif  // QUANTMERGE_RNG_HPP
