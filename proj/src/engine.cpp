#include "bloomjoin/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "bloomjoin/errors.hpp"
#include "bloomjoin/hash.hpp"
#include "bloomjoin/worker_pool.hpp"

namespace bloomjoin {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kShuffleSalt = 0x2545f4914f6cdd1dULL;

std::uint64_t bloom_seed_for(std::uint64_t run_seed) { return hash::splitmix64(run_seed ^ kDefaultBloomSeed); }

class PhaseTimer {
public:
    explicit PhaseTimer(std::chrono::nanoseconds& slot) : slot_(slot), start_(Clock::now()) {}
    ~PhaseTimer() { slot_ = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start_); }

    PhaseTimer(const PhaseTimer&) = delete;
    PhaseTimer& operator=(const PhaseTimer&) = delete;

private:
    std::chrono::nanoseconds& slot_;
    Clock::time_point start_;
};

struct Predicates {
    Predicate big;
    Predicate small;
};

Predicates predicates_for(const JoinConfig& config, const PartitionedTable& big, const PartitionedTable& small) {
    Predicates p{{Condition::condition1, config.sel_big}, {Condition::condition2, config.sel_small}};
    check_predicate(big.schema, p.big);
    check_predicate(small.schema, p.small);
    return p;
}

// Shuffles both sides and sort-merge joins each co-located partition pair.
JoinResult shuffle_sort_merge(const PartitionedTable& big, const PartitionedTable& small, const JoinConfig& config,
                              WorkerPool& pool) {
    PartitionedTable big_sh = shuffle(big, config.shuffle_partitions, config.seed, pool);
    PartitionedTable small_sh = shuffle(small, config.shuffle_partitions, config.seed, pool);
    JoinResult result;
    result.partitions.resize(config.shuffle_partitions);
    pool.parallel_for(config.shuffle_partitions, [&](std::size_t i) {
        result.partitions[i] = sort_merge_join(std::move(big_sh.partitions[i]), std::move(small_sh.partitions[i]));
    });
    return result;
}

std::uint32_t fanout_rounds(std::size_t workers) {
    const std::size_t w = std::max<std::size_t>(2, workers);
    return static_cast<std::uint32_t>(std::bit_width(w - 1));  // ceil(log2 w)
}

}  // namespace

std::string_view algorithm_name(Algorithm algorithm) noexcept {
    switch (algorithm) {
        case Algorithm::cascade: return "cascade";
        case Algorithm::shuffle: return "shuffle";
        case Algorithm::broadcast: return "broadcast";
    }
    return "cascade";
}

Algorithm parse_algorithm(std::string_view name) {
    if (name == "cascade") return Algorithm::cascade;
    if (name == "shuffle") return Algorithm::shuffle;
    if (name == "broadcast") return Algorithm::broadcast;
    throw InvalidArgument("unknown algorithm '" + std::string(name) + "' (cascade|shuffle|broadcast)");
}

void validate(const JoinConfig& config) {
    if (!(config.epsilon > 0.0 && config.epsilon <= 1.0))
        throw InvalidArgument("epsilon must lie in (0, 1], got " + std::to_string(config.epsilon));
    if (config.shuffle_partitions < 1) throw InvalidArgument("shuffle_partitions must be >= 1");
    if (!(config.safety_factor >= 1.0)) throw InvalidArgument("safety_factor must be >= 1");
    if (config.count_budget.count() <= 0) throw InvalidArgument("count_budget must be positive");
    Predicate{Condition::condition1, config.sel_big}.threshold();
    Predicate{Condition::condition2, config.sel_small}.threshold();
}

double to_millis(std::chrono::nanoseconds d) noexcept { return static_cast<double>(d.count()) / 1e6; }

std::size_t JoinResult::row_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : partitions) n += p.size();
    return n;
}

std::vector<JoinedRow> JoinResult::sorted_rows() const {
    std::vector<JoinedRow> rows;
    rows.reserve(row_count());
    for (const auto& p : partitions) rows.insert(rows.end(), p.begin(), p.end());
    std::sort(rows.begin(), rows.end());
    return rows;
}

void write_csv(const JoinResult& result, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "key,attribute1,attribute2\n";
    for (const auto& part : result.partitions)
        for (const auto& row : part) out << row.key << ',' << row.attribute1 << ',' << row.attribute2 << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

CountEstimate approx_count(const PartitionedTable& table, std::chrono::nanoseconds budget, std::uint64_t seed) {
    const auto start = Clock::now();
    const auto max_budget = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::time_point::max() - start);
    const auto deadline = budget >= max_budget ? Clock::time_point::max() : start + budget;
    return approx_count(table, [deadline](std::size_t) { return Clock::now() < deadline; }, seed);
}

CountEstimate approx_count(const PartitionedTable& table, const ScanContinue& keep_going, std::uint64_t seed) {
    const std::size_t total = table.partitions.size();
    if (total == 0) throw InvalidArgument("approx_count: table has no partitions");

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::uint64_t rows_seen = 0;
    std::size_t scanned = 0;
    for (std::size_t idx : order) {
        if (scanned > 0 && !keep_going(scanned)) break;
        rows_seen += table.partitions[idx].size();
        ++scanned;
    }

    CountEstimate est;
    est.scanned_partitions = scanned;
    est.total_partitions = total;
    est.exact = scanned == total;
    const auto scaled = static_cast<unsigned __int128>(rows_seen) * total;
    est.estimate = static_cast<std::uint64_t>((scaled + scanned - 1) / scanned);
    return est;
}

BloomFilter build_distributed_bloom(const PartitionedTable& table, const BloomParams& params, WorkerPool& pool) {
    if (table.partitions.empty()) return BloomFilter(params);

    std::vector<BloomFilter> level(table.partitions.size(), BloomFilter(params));
    pool.parallel_for(level.size(), [&](std::size_t i) {
        for (const auto& r : table.partitions[i]) level[i].insert(r.key);
    });

    while (level.size() > 1) {
        std::vector<BloomFilter> next((level.size() + 1) / 2);
        pool.parallel_for(next.size(), [&](std::size_t i) {
            if (2 * i + 1 < level.size())
                next[i] = merge(level[2 * i], level[2 * i + 1]);
            else
                next[i] = std::move(level[2 * i]);
        });
        level = std::move(next);
    }
    return std::move(level.front());
}

BloomFilter build_distributed_bloom(const PartitionedTable& table, const BloomParams& params, std::size_t workers) {
    WorkerPool pool(std::max<std::size_t>(1, workers));
    return build_distributed_bloom(table, params, pool);
}

BroadcastStats broadcast(const BloomFilter& filter, std::size_t workers) {
    const std::vector<std::uint8_t> payload = filter.serialize();
    auto received = std::make_shared<const BloomFilter>(BloomFilter::deserialize(payload));

    BroadcastStats stats;
    stats.serialized_size = payload.size();
    stats.fanout_rounds = fanout_rounds(workers);
    stats.bytes_broadcast = stats.serialized_size * stats.fanout_rounds;
    stats.replicas.assign(std::max<std::size_t>(1, workers), received);
    return stats;
}

FilterOutcome filter_big_table(const PartitionedTable& big, const BloomFilter* filter, const Predicate& pred,
                               WorkerPool& pool) {
    check_predicate(big.schema, pred);
    const std::int64_t threshold = pred.threshold();

    FilterOutcome out;
    out.table.schema = big.schema;
    out.table.partitions.resize(big.partitions.size());
    std::vector<std::uint64_t> dropped(big.partitions.size(), 0);

    pool.parallel_for(big.partitions.size(), [&](std::size_t i) {
        auto& dst = out.table.partitions[i];
        std::uint64_t drop = 0;
        for (const auto& r : big.partitions[i]) {
            if (r.filter_attr >= threshold) continue;
            if (filter && !filter->contains(r.key)) {
                ++drop;
                continue;
            }
            dst.push_back(r);
        }
        dropped[i] = drop;
    });

    out.kept = out.table.row_count();
    out.dropped = std::accumulate(dropped.begin(), dropped.end(), std::uint64_t{0});
    return out;
}

std::size_t shuffle_partition_of(std::uint64_t key, std::size_t num_partitions, std::uint64_t seed) noexcept {
    return static_cast<std::size_t>(hash::fmix64(key ^ hash::fmix64(seed ^ kShuffleSalt)) % num_partitions);
}

PartitionedTable shuffle(const PartitionedTable& table, std::size_t num_partitions, std::uint64_t seed,
                         WorkerPool& pool) {
    if (num_partitions == 0) throw InvalidArgument("shuffle: num_partitions must be >= 1");

    const std::size_t inputs = table.partitions.size();
    std::vector<std::vector<std::vector<Record>>> buckets(inputs);
    pool.parallel_for(inputs, [&](std::size_t i) {
        auto& local = buckets[i];
        local.resize(num_partitions);
        for (const auto& r : table.partitions[i]) local[shuffle_partition_of(r.key, num_partitions, seed)].push_back(r);
    });

    PartitionedTable out;
    out.schema = table.schema;
    out.partitions.resize(num_partitions);
    pool.parallel_for(num_partitions, [&](std::size_t d) {
        std::size_t total = 0;
        for (std::size_t i = 0; i < inputs; ++i) total += buckets[i][d].size();
        auto& dst = out.partitions[d];
        dst.reserve(total);
        for (std::size_t i = 0; i < inputs; ++i) dst.insert(dst.end(), buckets[i][d].begin(), buckets[i][d].end());
    });
    return out;
}

std::vector<JoinedRow> sort_merge_join(std::vector<Record> left, std::vector<Record> right) {
    std::vector<JoinedRow> out;
    if (left.empty() || right.empty()) return out;

    auto by_key = [](const Record& a, const Record& b) { return a.key < b.key; };
    std::stable_sort(left.begin(), left.end(), by_key);
    std::stable_sort(right.begin(), right.end(), by_key);

    std::size_t i = 0;
    std::size_t j = 0;
    while (i < left.size() && j < right.size()) {
        if (left[i].key < right[j].key) {
            ++i;
        } else if (right[j].key < left[i].key) {
            ++j;
        } else {
            const std::uint64_t key = left[i].key;
            std::size_t i_end = i;
            while (i_end < left.size() && left[i_end].key == key) ++i_end;
            std::size_t j_end = j;
            while (j_end < right.size() && right[j_end].key == key) ++j_end;
            for (std::size_t a = i; a < i_end; ++a)
                for (std::size_t b = j; b < j_end; ++b) out.push_back({key, left[a].payload, right[b].payload});
            i = i_end;
            j = j_end;
        }
    }
    return out;
}

JoinOutcome bloom_cascade_join(const PartitionedTable& big, const PartitionedTable& small, const JoinConfig& config) {
    validate(config);
    const Predicates preds = predicates_for(config, big, small);
    WorkerPool pool(resolve_thread_count(config.worker_threads));

    JoinOutcome out;
    PhaseTimings& t = out.timings;

    PartitionedTable small_filtered;
    {
        PhaseTimer timer(t.t_count);
        small_filtered = apply_predicate(small, preds.small);
        out.count = approx_count(small_filtered, config.count_budget, config.seed);
    }

    // At epsilon = 1 every key passes, so no filter is built or shipped.
    std::shared_ptr<const BloomFilter> filter;
    if (config.epsilon < 1.0) {
        std::optional<BloomFilter> built;
        {
            PhaseTimer timer(t.t_bloom_build);
            const double scaled = std::ceil(static_cast<double>(out.count.estimate) * config.safety_factor);
            const auto n = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(scaled));
            out.bloom = plan_parameters(n, config.epsilon, bloom_seed_for(config.seed));
            built = build_distributed_bloom(small_filtered, *out.bloom, pool);
        }
        BroadcastStats stats;
        {
            PhaseTimer timer(t.t_broadcast);
            stats = broadcast(*built, pool.size());
        }
        t.bytes_broadcast = stats.bytes_broadcast;
        out.filter_bytes = stats.serialized_size;
        filter = stats.replicas.front();
    }

    {
        PhaseTimer timer(t.t_filter_join);
        FilterOutcome filtered = filter_big_table(big, filter.get(), preds.big, pool);
        t.filtered_kept = filtered.kept;
        t.filtered_dropped = filtered.dropped;
        out.result = shuffle_sort_merge(filtered.table, small_filtered, config, pool);
    }
    t.result_rows = out.result.row_count();
    return out;
}

JoinOutcome baseline_shuffle_join(const PartitionedTable& big, const PartitionedTable& small,
                                  const JoinConfig& config) {
    validate(config);
    const Predicates preds = predicates_for(config, big, small);
    WorkerPool pool(resolve_thread_count(config.worker_threads));

    JoinOutcome out;
    PhaseTimings& t = out.timings;
    {
        PhaseTimer timer(t.t_filter_join);
        const PartitionedTable small_filtered = apply_predicate(small, preds.small);
        FilterOutcome filtered = filter_big_table(big, nullptr, preds.big, pool);
        t.filtered_kept = filtered.kept;
        t.filtered_dropped = 0;
        out.result = shuffle_sort_merge(filtered.table, small_filtered, config, pool);
    }
    t.result_rows = out.result.row_count();
    return out;
}

JoinOutcome baseline_broadcast_hash_join(const PartitionedTable& big, const PartitionedTable& small,
                                         const JoinConfig& config) {
    validate(config);
    const Predicates preds = predicates_for(config, big, small);
    WorkerPool pool(resolve_thread_count(config.worker_threads));

    JoinOutcome out;
    PhaseTimings& t = out.timings;

    std::unordered_map<std::uint64_t, std::vector<std::int64_t>> table;
    {
        PhaseTimer timer(t.t_broadcast);
        const PartitionedTable small_filtered = apply_predicate(small, preds.small);
        const std::size_t rows = small_filtered.row_count();
        if (rows > config.broadcast_max_rows) {
            throw CapacityError("broadcast hash join: small side has " + std::to_string(rows) +
                                " rows, cap is " + std::to_string(config.broadcast_max_rows) +
                                "; use the cascade join");
        }
        table.reserve(rows);
        for (const auto& part : small_filtered.partitions)
            for (const auto& r : part) table[r.key].push_back(r.payload);
        out.filter_bytes = rows * (sizeof(std::uint64_t) + sizeof(std::int64_t));
        t.bytes_broadcast = out.filter_bytes * fanout_rounds(pool.size());
    }

    {
        PhaseTimer timer(t.t_filter_join);
        const std::int64_t threshold = preds.big.threshold();
        out.result.partitions.resize(big.partitions.size());
        std::vector<std::uint64_t> kept(big.partitions.size(), 0);
        pool.parallel_for(big.partitions.size(), [&](std::size_t i) {
            auto& dst = out.result.partitions[i];
            for (const auto& r : big.partitions[i]) {
                if (r.filter_attr >= threshold) continue;
                ++kept[i];
                const auto it = table.find(r.key);
                if (it == table.end()) continue;
                for (std::int64_t payload : it->second) dst.push_back({r.key, r.payload, payload});
            }
            std::stable_sort(dst.begin(), dst.end(),
                             [](const JoinedRow& a, const JoinedRow& b) { return a.key < b.key; });
        });
        t.filtered_kept = std::accumulate(kept.begin(), kept.end(), std::uint64_t{0});
    }
    t.result_rows = out.result.row_count();
    return out;
}

JoinOutcome run_join(Algorithm algorithm, const PartitionedTable& big, const PartitionedTable& small,
                     const JoinConfig& config) {
    switch (algorithm) {
        case Algorithm::cascade: return bloom_cascade_join(big, small, config);
        case Algorithm::shuffle: return baseline_shuffle_join(big, small, config);
        case Algorithm::broadcast: return baseline_broadcast_hash_join(big, small, config);
    }
    throw InvalidArgument("unknown algorithm");
}

std::vector<JoinedRow> nested_loop_oracle(const PartitionedTable& big, const PartitionedTable& small,
                                          const Predicate& big_pred, const Predicate& small_pred) {
    const std::int64_t big_threshold = big_pred.threshold();
    const std::int64_t small_threshold = small_pred.threshold();

    std::vector<std::uint64_t> small_keys;
    std::vector<std::int64_t> small_payloads;
    for (const auto& part : small.partitions) {
        for (const auto& r : part) {
            if (r.filter_attr >= small_threshold) continue;
            small_keys.push_back(r.key);
            small_payloads.push_back(r.payload);
        }
    }

    std::vector<JoinedRow> out;
    for (const auto& part : big.partitions) {
        for (const auto& r : part) {
            if (r.filter_attr >= big_threshold) continue;
            for (std::size_t j = 0; j < small_keys.size(); ++j)
                if (small_keys[j] == r.key) out.push_back({r.key, r.payload, small_payloads[j]});
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::uint64_t count_filtrable(const PartitionedTable& big, const PartitionedTable& small,
                              const Predicate& big_pred, const Predicate& small_pred) {
    const std::int64_t big_threshold = big_pred.threshold();
    const std::int64_t small_threshold = small_pred.threshold();
    std::unordered_set<std::uint64_t> keys;
    for (const auto& part : small.partitions)
        for (const auto& r : part)
            if (r.filter_attr < small_threshold) keys.insert(r.key);

    std::uint64_t filtrable = 0;
    for (const auto& part : big.partitions)
        for (const auto& r : part)
            if (r.filter_attr < big_threshold && !keys.contains(r.key)) ++filtrable;
    return filtrable;
}

}  // namespace bloomjoin
