#include "bloomjoin/bloom.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "bloomjoin/errors.hpp"
#include "bloomjoin/hash.hpp"

namespace bloomjoin {

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t value, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t offset, int bytes) {
    std::uint64_t value = 0;
    for (int i = 0; i < bytes; ++i) value |= std::uint64_t{in[offset + i]} << (8 * i);
    return value;
}

}  // namespace

double sized_bits(double n_expected, double epsilon) noexcept {
    return n_expected * 1.44 * std::log2(1.0 / epsilon);
}

BloomParams plan_parameters(std::uint64_t n_expected, double epsilon, std::uint64_t hash_seed) {
    if (n_expected == 0) throw InvalidArgument("plan_parameters: n_expected must be >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw InvalidArgument("plan_parameters: epsilon must lie in (0, 1), got " + std::to_string(epsilon));

    BloomParams p;
    p.n_expected = n_expected;
    p.epsilon = epsilon;
    p.hash_seed = hash_seed;
    const double bits = std::ceil(sized_bits(static_cast<double>(n_expected), epsilon));
    p.m_bits = bits < 1.0 ? 1 : static_cast<std::uint64_t>(bits);
    const double k = std::round(static_cast<double>(p.m_bits) / static_cast<double>(n_expected) * std::log(2.0));
    p.k_hashes = k < 1.0 ? 1U : static_cast<std::uint32_t>(k);
    return p;
}

BloomFilter::BloomFilter(const BloomParams& params) : params_(params), words_((params.m_bits + 63) / 64, 0) {
    if (params.m_bits == 0 || params.k_hashes == 0)
        throw InvalidArgument("BloomFilter: m_bits and k_hashes must be >= 1");
}

void BloomFilter::positions(std::uint64_t key, std::span<std::uint64_t> out) const noexcept {
    const std::uint64_t m = params_.m_bits;
    const std::uint64_t h1 = hash::splitmix64(key ^ params_.hash_seed);
    const std::uint64_t h2 = hash::splitmix64(key ^ std::rotl(params_.hash_seed, 32) ^ kSecondHashSalt);
    std::uint64_t pos = h1 % m;
    const std::uint64_t step = h2 % m;
    for (std::uint32_t i = 0; i < params_.k_hashes; ++i) {
        out[i] = pos;
        pos += step;
        if (pos >= m) pos -= m;
    }
}

void BloomFilter::insert(std::uint64_t key) noexcept {
    const std::uint64_t m = params_.m_bits;
    const std::uint64_t h1 = hash::splitmix64(key ^ params_.hash_seed);
    const std::uint64_t h2 = hash::splitmix64(key ^ std::rotl(params_.hash_seed, 32) ^ kSecondHashSalt);
    std::uint64_t pos = h1 % m;
    const std::uint64_t step = h2 % m;
    for (std::uint32_t i = 0; i < params_.k_hashes; ++i) {
        words_[pos >> 6] |= std::uint64_t{1} << (pos & 63);
        pos += step;
        if (pos >= m) pos -= m;
    }
    ++inserted_count_;
}

bool BloomFilter::contains(std::uint64_t key) const noexcept {
    if (words_.empty()) return false;
    const std::uint64_t m = params_.m_bits;
    const std::uint64_t h1 = hash::splitmix64(key ^ params_.hash_seed);
    const std::uint64_t h2 = hash::splitmix64(key ^ std::rotl(params_.hash_seed, 32) ^ kSecondHashSalt);
    std::uint64_t pos = h1 % m;
    const std::uint64_t step = h2 % m;
    for (std::uint32_t i = 0; i < params_.k_hashes; ++i) {
        if (!((words_[pos >> 6] >> (pos & 63)) & 1U)) return false;
        pos += step;
        if (pos >= m) pos -= m;
    }
    return true;
}

void BloomFilter::merge_in(const BloomFilter& other) {
    if (!params_.same_geometry(other.params_)) {
        throw IncompatibleFilter("merge: filters differ in m_bits/k_hashes/hash_seed (" +
                                 std::to_string(params_.m_bits) + "/" + std::to_string(params_.k_hashes) +
                                 " vs " + std::to_string(other.params_.m_bits) + "/" +
                                 std::to_string(other.params_.k_hashes) + ")");
    }
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
    inserted_count_ += other.inserted_count_;
}

std::uint64_t BloomFilter::popcount() const noexcept {
    std::uint64_t total = 0;
    for (auto w : words_) total += static_cast<std::uint64_t>(std::popcount(w));
    return total;
}

std::vector<std::uint8_t> BloomFilter::serialize() const {
    std::vector<std::uint8_t> out;
    out.reserve(serialized_size());
    put_le(out, params_.m_bits, 8);
    put_le(out, params_.k_hashes, 4);
    put_le(out, params_.hash_seed, 8);
    put_le(out, inserted_count_, 8);
    const std::size_t body = (params_.m_bits + 7) / 8;
    for (std::size_t i = 0; i < body; ++i) out.push_back(static_cast<std::uint8_t>(words_[i / 8] >> (8 * (i % 8))));
    return out;
}

BloomFilter BloomFilter::deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes)
        throw DeserializeError("bloom filter: truncated header (" + std::to_string(bytes.size()) + " bytes)");

    BloomParams p;
    p.m_bits = get_le(bytes, 0, 8);
    p.k_hashes = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
    p.hash_seed = get_le(bytes, 12, 8);
    const std::uint64_t inserted = get_le(bytes, 20, 8);
    if (p.m_bits == 0 || p.k_hashes == 0) throw DeserializeError("bloom filter: zero m_bits or k_hashes in header");
    if (p.m_bits > (std::numeric_limits<std::uint64_t>::max() - 7))
        throw DeserializeError("bloom filter: m_bits out of range");
    const std::uint64_t body = (p.m_bits + 7) / 8;
    if (bytes.size() - kHeaderBytes != body) {
        throw DeserializeError("bloom filter: expected " + std::to_string(body) + " body bytes, got " +
                               std::to_string(bytes.size() - kHeaderBytes));
    }
    if (const unsigned tail = p.m_bits % 8; tail != 0) {
        if (bytes.back() >> tail) throw DeserializeError("bloom filter: padding bits set past m_bits");
    }

    BloomFilter filter(p);
    for (std::size_t i = 0; i < body; ++i)
        filter.words_[i / 8] |= std::uint64_t{bytes[kHeaderBytes + i]} << (8 * (i % 8));
    filter.inserted_count_ = inserted;
    return filter;
}

BloomFilter merge(const BloomFilter& a, const BloomFilter& b) {
    BloomFilter out = a;
    out.merge_in(b);
    return out;
}

}  // namespace bloomjoin
