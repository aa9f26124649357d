#pragma once

#include <cstdint>
#include <vector>

namespace was::rng {

// SplitMix64 finalizer. Good avalanche, cheap, stateless.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stream purposes. Distinct constants keep the per-purpose streams disjoint
// even when the numeric seeds coincide.
enum class Purpose : uint64_t {
    WeightInit = 1,
    Shuffle = 2,
    Transform = 3,
    DomMaterialize = 4,
    Subset = 5,
    DataPerturb = 6,
    Synth = 7,
};

// Counter-based random stream keyed by (seed, purpose, a, b).
//
// Draw i of a stream is a pure function of the key and i, so two streams
// built from the same key always produce the same sequence no matter when
// or on which thread they are created.
class Stream {
public:
    Stream(uint64_t seed, Purpose purpose, uint64_t a = 0, uint64_t b = 0) {
        uint64_t h = mix64(seed + 0x243f6a8885a308d3ull);
        h = mix64(h ^ (static_cast<uint64_t>(purpose) + 0x13198a2e03707344ull));
        h = mix64(h ^ (a + 0xa4093822299f31d0ull));
        h = mix64(h ^ (b + 0x082efa98ec4e6c89ull));
        key_ = h;
    }

    uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

    // [0, 1)
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + next_unit() * (hi - lo); }

    // Inclusive on both ends; unbiased via rejection.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
        const uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return lo + static_cast<int64_t>(draw % range);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices drawn uniformly from {0, ..., n-1}, in draw order.
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
        std::vector<int64_t> pool(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
        std::vector<int64_t> out;
        out.reserve(static_cast<size_t>(k));
        for (int64_t i = 0; i < k; ++i) {
            const int64_t j = uniform_int(i, n - 1);
            std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
            out.push_back(pool[static_cast<size_t>(i)]);
        }
        return out;
    }

private:
    uint64_t key_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace was::rng
