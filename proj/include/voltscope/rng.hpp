#pragma once

#include <cmath>
#include <cstdint>

namespace voltscope {

// Every random draw in the workbench goes through one of these named
// streams, derived from (seed, stream, index). Two pipelines that share a
// seed but touch different streams stay independently reproducible, and
// per-trace streams make generation order-independent across workers.
enum class Stream : std::uint64_t {
    Plaintexts = 1,
    Voltages = 2,
    Noise = 3,
    ClockJitter = 4,
    GroupSplit = 5,
    KmeansInit = 6,
    Bootstrap = 7,
    TvlaPlaintexts = 8,
};

inline std::uint64_t splitmix64_next(std::uint64_t &state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256++ seeded via splitmix64 over (seed, stream, index).
class Rng {
  public:
    Rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
        std::uint64_t mix = seed;
        (void)splitmix64_next(mix);
        mix ^= static_cast<std::uint64_t>(stream) * 0x9e3779b97f4a7c15ULL;
        (void)splitmix64_next(mix);
        mix ^= index * 0xd1342543de82ef95ULL;
        for (auto &word : state_)
            word = splitmix64_next(mix);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform in [0, n). Lemire reduction; bias is below 2^-64.
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    std::uint8_t byte() { return static_cast<std::uint8_t>(next() >> 56); }

    // Box-Muller with a cached spare, for platform-stable draws.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double sigma) { return sigma * gaussian(); }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4] = {};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace voltscope
