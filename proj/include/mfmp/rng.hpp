#ifndef MFMP_RNG_HPP
#define MFMP_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mfmp {

// Splitmix64 generator behind keyed streams. A stream is identified by
// (master seed, purpose tag, counters); the key is mixed once, so the same
// identity always replays the same noise regardless of call order. This is
// what makes common-random-numbers comparisons and byte-identical reruns
// possible without storing every draw.
class Rng {
public:
    explicit Rng(std::uint64_t state) : state_(state) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform on (0,1), endpoints excluded
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // standard normal via Box-Muller, second member of the pair cached
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double two_pi = 6.283185307179586476925286766559;
        double r = std::sqrt(-2.0 * std::log(next_uniform()));
        double a = two_pi * next_uniform();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double next_exponential(double rate) {
        return -std::log(next_uniform()) / rate;
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline std::uint64_t mix_u64(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ULL;
    h = (h ^ (h >> 27)) * 0x94D049BB133111EBULL;
    return h ^ (h >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t stream_key(std::uint64_t master, std::string_view purpose,
                                std::uint64_t i0 = 0, std::uint64_t i1 = 0) {
    std::uint64_t h = mix_u64(master, hash_tag(purpose));
    h = mix_u64(h, i0);
    h = mix_u64(h, i1);
    return h;
}

inline Rng make_stream(std::uint64_t master, std::string_view purpose,
                       std::uint64_t i0 = 0, std::uint64_t i1 = 0) {
    return Rng(stream_key(master, purpose, i0, i1));
}

} // namespace mfmp

#endif
