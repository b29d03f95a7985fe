#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace lesionkit {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Mixes an arbitrary list of 64-bit words into one key.
inline constexpr std::uint64_t mix_key(std::initializer_list<std::uint64_t> words) {
    std::uint64_t k = 0x6A09E667F3BCC909ULL;
    for (auto w : words) k = splitmix64(k ^ splitmix64(w));
    return k;
}

// Counter-based stream: the n-th draw depends only on (key, n), so values
// for one (seed, image, replica) never depend on generation order.
class CounterStream {
public:
    explicit constexpr CounterStream(std::uint64_t key) : key_(key) {}

    constexpr std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }
    // Uniform in [0, 1) with 53 bits of resolution.
    constexpr double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    // Uniform in [lo, hi].
    constexpr double next_between(double lo, double hi) { return lo + (hi - lo) * next_unit(); }
    // Uniform integer in [0, n), n > 0, by rejection.
    constexpr std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = std::uint64_t(0) - (std::uint64_t(0) - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (limit == 0 || r < limit) return r % n;
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Sequential generator for seeded shuffles. std distributions are
// implementation-defined, so bounded draws and shuffles are done here to
// keep results identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, n), n > 0, by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = std::uint64_t(0) - (std::uint64_t(0) - n) % n;
        for (;;) {
            const std::uint64_t r = engine_();
            if (limit == 0 || r < limit) return r % n;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace lesionkit
