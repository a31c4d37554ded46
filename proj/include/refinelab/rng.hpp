#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <vector>

namespace refinelab {

// splitmix64 finalizer; used to derive independent stream seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stable derivation of a child seed from (seed, stream id).
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    return mix64(mix64(seed ^ 0x6a09e667f3bcc909ULL) + mix64(stream));
}

// Deterministic random stream. Distributions are hand-rolled on top of the
// raw 64-bit generator so sequences do not depend on the standard library's
// distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(mix64(seed)) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0,1) with 53-bit resolution
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // unbiased integer in [0, n), n >= 1
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;  // 2^64 mod n
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int below_int(int n) { return int(below(uint64_t(n))); }

    // integer in [lo, hi] inclusive
    int range_int(int lo, int hi) { return lo + below_int(hi - lo + 1); }

    bool bernoulli(double p) { return uniform01() < p; }

    // standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        spare_ = r * std::sin(two_pi * u2);
        have_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // index sampled from an (unnormalized, nonnegative) weight vector
    int multinomial(const double* w, int n) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += w[i];
        double r = uniform01() * total;
        for (int i = 0; i < n; ++i) {
            r -= w[i];
            if (r < 0.0) return i;
        }
        return n - 1;
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace refinelab
