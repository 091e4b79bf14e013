#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace oogan {

/// Deterministic random source used everywhere in the toolkit.
///
/// Wraps mt19937_64 but implements the uniform/normal/randint transforms
/// itself: std::*_distribution objects carry hidden internal state (e.g. the
/// cached second Box-Muller draw) and are implementation-defined, either of
/// which would break bitwise checkpoint-resume replay. Every draw here
/// consumes a fixed, explicit number of engine words.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    uint64_t raw() { return eng_(); }

    /// Uniform on [0,1) with 53 random bits.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (no cached second value: stateless
    /// across calls at the cost of one discarded draw, which keeps replay
    /// exact).
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Uniform integer in [0, n), unbiased via rejection.
    int64_t randint(int64_t n);

    void fill_uniform01(double* dst, int64_t n) {
        for (int64_t i = 0; i < n; ++i) dst[i] = uniform01();
    }
    void fill_normal(double* dst, int64_t n, double mean = 0.0, double sd = 1.0) {
        for (int64_t i = 0; i < n; ++i) dst[i] = normal(mean, sd);
    }

    /// Fisher-Yates shuffle (uses randint, so replay-exact).
    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (int64_t i = static_cast<int64_t>(xs.size()) - 1; i > 0; --i) {
            int64_t j = randint(i + 1);
            std::swap(xs[static_cast<size_t>(i)], xs[static_cast<size_t>(j)]);
        }
    }

    /// Exact engine state as text, suitable for checkpoint sidecars.
    std::string serialize() const;
    static Rng deserialize(const std::string& s);

    /// Short FNV-1a digest of the serialized state (sidecar integrity field).
    uint64_t digest() const;

    bool operator==(const Rng& o) const { return eng_ == o.eng_; }

private:
    std::mt19937_64 eng_;
};

}  // namespace oogan
