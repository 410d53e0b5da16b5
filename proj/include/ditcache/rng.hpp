#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ditcache {

// mt19937_64 with explicit uniform/normal mappings. std::*_distribution output
// is implementation-defined, so we map raw engine words ourselves to keep
// streams identical across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed), seed_mix_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0,1) with 53-bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n); negligible modulo bias at 53 bits
    int uniform_int(int n) {
        int v = static_cast<int>(uniform() * n);
        return v < n ? v : n - 1;
    }

    // Box-Muller; the second variate is cached so pairs are consumed in order.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0,1], keeps log() finite
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    std::vector<double> normal_vec(size_t n, double mean = 0.0, double sigma = 1.0) {
        std::vector<double> out(n);
        for (auto& v : out)
            v = mean + sigma * normal();
        return out;
    }

    // Derived generator for an independent sub-stream (splitmix-style mixing).
    Rng fork(uint64_t stream) const {
        uint64_t s = seed_mix_ ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
        s ^= s >> 30;
        s *= 0xBF58476D1CE4E5B9ULL;
        s ^= s >> 27;
        return Rng(s);
    }

private:
    std::mt19937_64 eng_;
    uint64_t seed_mix_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ditcache
