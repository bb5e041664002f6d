#pragma once

// Mergeable Bloom filter for join-key pre-filtering.
//
// Size planning follows m = ceil(n * 1.44 * log2(1/eps)) with the textbook
// hash count k = round((m/n) * ln 2). Bit positions use double hashing,
// h_i = (h1 + i*h2) mod m, with
//   h1 = splitmix64(key ^ seed)
//   h2 = splitmix64(key ^ rotl(seed, 32) ^ kSecondHashSalt).
// Filters with equal geometry (m, k, seed) merge by bitwise OR, so
// per-partition filters can be built independently and reduced in any order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bloomjoin {

inline constexpr std::uint64_t kDefaultBloomSeed = 0x5eedb100f11e7e25ULL;
inline constexpr std::uint64_t kSecondHashSalt = 0xa0761d6478bd642fULL;

struct BloomParams {
    std::uint64_t n_expected = 0;  // 0 when unknown (deserialized filters)
    double epsilon = 0.0;          // 0 when unknown (deserialized filters)
    std::uint64_t m_bits = 0;
    std::uint32_t k_hashes = 0;
    std::uint64_t hash_seed = kDefaultBloomSeed;

    // True when bit positions computed under both parameter sets coincide.
    bool same_geometry(const BloomParams& other) const noexcept {
        return m_bits == other.m_bits && k_hashes == other.k_hashes && hash_seed == other.hash_seed;
    }

    friend bool operator==(const BloomParams&, const BloomParams&) = default;
};

// Throws InvalidArgument unless n_expected >= 1 and 0 < epsilon < 1.
BloomParams plan_parameters(std::uint64_t n_expected, double epsilon,
                            std::uint64_t hash_seed = kDefaultBloomSeed);

// Unrounded n * 1.44 * log2(1/eps); shared by planning and the cost model.
double sized_bits(double n_expected, double epsilon) noexcept;

class BloomFilter {
public:
    // Header: m_bits u64, k_hashes u32, hash_seed u64, inserted_count u64 (LE).
    static constexpr std::size_t kHeaderBytes = 8 + 4 + 8 + 8;

    BloomFilter() = default;
    explicit BloomFilter(const BloomParams& params);

    void insert(std::uint64_t key) noexcept;
    bool contains(std::uint64_t key) const noexcept;

    // Writes the k bit positions for key into out (size >= k_hashes).
    void positions(std::uint64_t key, std::span<std::uint64_t> out) const noexcept;

    // OR-merge. Throws IncompatibleFilter on geometry mismatch.
    void merge_in(const BloomFilter& other);

    const BloomParams& params() const noexcept { return params_; }
    std::uint64_t inserted_count() const noexcept { return inserted_count_; }
    std::uint64_t popcount() const noexcept;
    bool test_bit(std::uint64_t index) const noexcept {
        return (words_[index >> 6] >> (index & 63)) & 1U;
    }

    std::size_t serialized_size() const noexcept { return kHeaderBytes + (params_.m_bits + 7) / 8; }
    std::vector<std::uint8_t> serialize() const;
    // Throws DeserializeError on truncated, oversized, or inconsistent input.
    static BloomFilter deserialize(std::span<const std::uint8_t> bytes);

    // Bit arrays, geometry and insert counts equal.
    friend bool operator==(const BloomFilter& a, const BloomFilter& b) noexcept {
        return a.params_.same_geometry(b.params_) && a.inserted_count_ == b.inserted_count_ &&
               a.words_ == b.words_;
    }
    // Bit arrays and geometry equal; ignores insert counts.
    bool same_bits(const BloomFilter& other) const noexcept {
        return params_.same_geometry(other.params_) && words_ == other.words_;
    }

private:
    BloomParams params_;
    std::vector<std::uint64_t> words_;
    std::uint64_t inserted_count_ = 0;
};

BloomFilter merge(const BloomFilter& a, const BloomFilter& b);

}  // namespace bloomjoin
