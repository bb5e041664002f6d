#pragma once

// Test-only fixtures and oracles. Nothing here calls into the code paths it
// is used to check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "bloomjoin/data.hpp"

namespace bloomjoin::testing {

struct JoinFixture {
    PartitionedTable big;
    PartitionedTable small;
    double sel_big = 1.0;
    double sel_small = 1.0;
};

// Generic-schema tables with overlapping key ranges and duplicate keys on
// both sides.
inline JoinFixture random_fixture(std::uint64_t seed, std::size_t max_big, std::size_t max_small) {
    std::mt19937_64 rng(seed);
    auto uniform = [&](std::uint64_t lo, std::uint64_t hi) {
        return lo + static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * (hi - lo + 1)) >> 64);
    };

    JoinFixture f;
    const std::size_t n_big = uniform(0, max_big);
    const std::size_t n_small = uniform(0, max_small);
    const std::uint64_t key_hi = uniform(1, std::max<std::uint64_t>(2, n_small * 3));
    const std::uint64_t big_offset = uniform(0, key_hi / 2);

    std::vector<Record> big(n_big);
    for (auto& r : big)
        r = {1 + big_offset + uniform(0, key_hi), static_cast<std::int64_t>(uniform(0, 1'000'000)),
             static_cast<std::int64_t>(uniform(0, kFilterDomain - 1))};
    std::vector<Record> small(n_small);
    for (auto& r : small)
        r = {1 + uniform(0, key_hi), static_cast<std::int64_t>(uniform(0, 1'000'000)),
             static_cast<std::int64_t>(uniform(0, kFilterDomain - 1))};

    f.big.schema = Schema::generic;
    f.small.schema = Schema::generic;
    f.big.partitions.push_back(std::move(big));
    f.small.partitions.push_back(std::move(small));
    f.big = partition(f.big, ByCount{1 + static_cast<std::size_t>(uniform(0, 15))});
    f.small = partition(f.small, ByCount{1 + static_cast<std::size_t>(uniform(0, 7))});
    f.sel_big = 0.25 + 0.75 * static_cast<double>(uniform(0, 1000)) / 1000.0;
    f.sel_small = 0.1 + 0.9 * static_cast<double>(uniform(0, 1000)) / 1000.0;
    return f;
}

inline PartitionedTable generic_table(std::vector<std::uint64_t> keys, std::size_t partitions = 1) {
    PartitionedTable t;
    t.schema = Schema::generic;
    auto& rows = t.partitions.emplace_back();
    for (std::size_t i = 0; i < keys.size(); ++i)
        rows.push_back({keys[i], static_cast<std::int64_t>(i), 0});
    return partitions == 1 ? t : partition(t, ByCount{partitions});
}

// Plain bisection on a sign change of f over [lo, hi], iterated until the
// interval stops shrinking in floating point.
inline double bisect_root(const std::function<double(double)>& f, double lo, double hi) {
    double f_lo = f(lo);
    for (int i = 0; i < 2000; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double f_mid = f(mid);
        if ((f_mid < 0.0) == (f_lo < 0.0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

inline double central_difference(const std::function<double(double)>& g, double x, double h) {
    return (g(x + h) - g(x - h)) / (2.0 * h);
}

// Binomial 3-sigma band around n * p.
inline bool within_three_sigma(double observed, double n, double p) {
    const double sigma = std::sqrt(n * p * (1.0 - p));
    return std::abs(observed - n * p) <= 3.0 * sigma + 1e-9;
}

}  // namespace bloomjoin::testing
