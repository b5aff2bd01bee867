#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace kmft {

// xoshiro256++ with splitmix64 seeding: fast, well-tested statistics, and
// bit-identical across platforms (std::normal_distribution is not).
struct Xoshiro256pp {
    std::array<std::uint64_t, 4> s{};

    explicit Xoshiro256pp(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& si : s) {
            x += 0x9E3779B97F4A7C15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            si = z ^ (z >> 31);
        }
    }

    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }  // [0,1)
    double uniform_pos() {                                                      // (0,1]
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }
};

// Deterministic derivation of stream seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Standard normals via Box-Muller (trig form); batch fill amortizes well and
// keeps the stream independent of the consumer's call pattern.
class NormalSampler {
  public:
    explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(rng_.uniform_pos()));
        const double a = 6.283185307179586476925286766559 * rng_.uniform();
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void fill(T* out, std::size_t n) {
        std::size_t i = 0;
        for (; i + 1 < n; i += 2) {
            const double r = std::sqrt(-2.0 * std::log(rng_.uniform_pos()));
            const double a = 6.283185307179586476925286766559 * rng_.uniform();
            out[i] = static_cast<T>(r * std::cos(a));
            out[i + 1] = static_cast<T>(r * std::sin(a));
        }
        if (i < n) out[i] = static_cast<T>((*this)());
    }

    Xoshiro256pp& raw() { return rng_; }

  private:
    Xoshiro256pp rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace kmft
