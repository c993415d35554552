#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace solarspot {

/// The one deterministic random generator every seeded operation draws from.
///
/// All derived draws are defined on top of the raw mt19937_64 output stream
/// (which the C++ standard pins bit-exactly), so a given seed produces the
/// same values on every conforming standard library:
///   - next_u64:       one raw engine output
///   - uniform_index:  rejection sampling, draws until below the largest
///                     multiple of n, then takes u % n
///   - uniform_real:   top 53 bits scaled to [0, 1)
///   - gaussian:       Box-Muller on two uniform_real draws; the second
///                     variate is cached and returned by the next call
///   - shuffle:        Fisher-Yates from the back using uniform_index
///
/// gaussian() goes through libm (log/sqrt/cos/sin), so its stream is
/// deterministic per build rather than across platforms; tests assert
/// determinism, not specific values.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, n). n must be >= 1.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n + 1) % n;
        std::uint64_t u = next_u64();
        while (u > limit) u = next_u64();
        return u % n;
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform_real() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform_real(double lo, double hi) {
        return lo + (hi - lo) * uniform_real();
    }

    /// Standard normal variate (Box-Muller).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform_real();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform_real();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Half-up rounding used everywhere a real value lands on an integer grid.
inline long long round_half_up(double x) {
    return static_cast<long long>(std::floor(x + 0.5));
}

}  // namespace solarspot
