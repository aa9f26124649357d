#include <doctest.h>

#include <set>
#include <thread>

#include "was/rng.hpp"

using namespace was;

TEST_CASE("streams with the same key reproduce the same draws") {
    rng::Stream a(42, rng::Purpose::Transform, 3, 17);
    rng::Stream b(42, rng::Purpose::Transform, 3, 17);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("streams are independent of call interleaving") {
    rng::Stream a1(7, rng::Purpose::Shuffle, 0);
    rng::Stream b1(7, rng::Purpose::Shuffle, 1);
    std::vector<uint64_t> seq_a, seq_b;
    for (int i = 0; i < 50; ++i) seq_a.push_back(a1.next_u64());
    for (int i = 0; i < 50; ++i) seq_b.push_back(b1.next_u64());

    rng::Stream a2(7, rng::Purpose::Shuffle, 0);
    rng::Stream b2(7, rng::Purpose::Shuffle, 1);
    for (int i = 0; i < 50; ++i) {  // interleaved this time
        CHECK(a2.next_u64() == seq_a[static_cast<size_t>(i)]);
        CHECK(b2.next_u64() == seq_b[static_cast<size_t>(i)]);
    }
}

TEST_CASE("streams are reproducible across threads") {
    std::vector<uint64_t> serial;
    for (int lane = 0; lane < 4; ++lane) {
        rng::Stream s(5, rng::Purpose::Transform, static_cast<uint64_t>(lane));
        serial.push_back(s.next_u64());
    }
    std::vector<uint64_t> threaded(4);
    std::vector<std::thread> pool;
    for (int lane = 0; lane < 4; ++lane) {
        pool.emplace_back([&threaded, lane] {
            rng::Stream s(5, rng::Purpose::Transform, static_cast<uint64_t>(lane));
            threaded[static_cast<size_t>(lane)] = s.next_u64();
        });
    }
    for (auto& t : pool) t.join();
    CHECK(serial == threaded);
}

TEST_CASE("purposes give disjoint streams") {
    rng::Stream a(9, rng::Purpose::WeightInit);
    rng::Stream b(9, rng::Purpose::Shuffle);
    int same = 0;
    for (int i = 0; i < 20; ++i) {
        if (a.next_u64() == b.next_u64()) ++same;
    }
    CHECK(same == 0);
}

TEST_CASE("uniform_int covers the inclusive range roughly evenly") {
    rng::Stream s(1, rng::Purpose::Transform);
    std::vector<int> counts(3, 0);
    for (int i = 0; i < 30000; ++i) {
        const int64_t v = s.uniform_int(-1, 1);
        REQUIRE(v >= -1);
        REQUIRE(v <= 1);
        ++counts[static_cast<size_t>(v + 1)];
    }
    for (int c : counts) {
        CHECK(c > 9300);
        CHECK(c < 10700);
    }
}

TEST_CASE("next_unit stays in [0, 1)") {
    rng::Stream s(2, rng::Purpose::Transform);
    for (int i = 0; i < 10000; ++i) {
        const double u = s.next_unit();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("sample_without_replacement yields distinct in-range indices") {
    rng::Stream s(3, rng::Purpose::Transform);
    const auto picks = s.sample_without_replacement(10, 6);
    CHECK(picks.size() == 6);
    std::set<int64_t> uniq(picks.begin(), picks.end());
    CHECK(uniq.size() == 6);
    for (int64_t v : picks) {
        CHECK(v >= 0);
        CHECK(v < 10);
    }
    rng::Stream s2(3, rng::Purpose::Transform);
    CHECK(s2.sample_without_replacement(10, 6) == picks);
}
