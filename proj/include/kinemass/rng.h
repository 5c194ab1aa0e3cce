#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "kinemass/mathutil.h"

namespace kinemass {

/**
    Deterministic random stream with explicit, serializable state.
    Standard-library distributions are avoided on purpose: their internal
    state is implementation defined, which would break exact checkpoint
    resume. Every draw consumes a fixed number of engine words.
*/
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

    /// uniform double in [0, 1), 53 random bits
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

    /// uniform double in [a, b)
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// standard normal via Box-Muller, no spare cached (two engine words per draw)
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * math::PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// unbiased integer in [lo, hi] inclusive
    std::int64_t uniformInt(std::int64_t lo, std::int64_t hi) {
        std::uint64_t n = std::uint64_t(hi - lo) + 1;
        std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % n);
        std::uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return lo + std::int64_t(v % n);
    }

    std::string saveState() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void loadState(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

}  // namespace kinemass
