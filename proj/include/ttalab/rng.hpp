#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace ttalab {

// Counter-based generator (splitmix64 core). Draw i is a pure function of
// (seed, i), so equal seeds give identical sequences on every platform that
// shares the same libm at the distribution level. split() derives an
// independent stream keyed off the *initial* seed, not the draw position.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t next_u64() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // uniform in [0, 1)
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // standard normal, Box-Muller; consumes exactly two uniforms per call
    double normal() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // uniform integer in {0, ..., n-1} via multiply-shift
    int below(int n) noexcept {
        return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                                 static_cast<std::uint64_t>(n)) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) noexcept {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            const int j = below(i + 1);
            std::swap(v[i], v[static_cast<std::size_t>(j)]);
        }
    }

    // independent child stream; deterministic in (initial seed, key)
    Rng split(std::uint64_t key) const noexcept {
        return Rng(mix(seed_ ^ mix(key + 0x632BE59BD9B4E019ULL)));
    }

    std::uint64_t initial_seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

// fnv-1a, for naming rng substreams
constexpr std::uint64_t stream_key(std::string_view name) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace ttalab
