#pragma once

// Bloom-filtered cascade join over partitioned tables.
//
// The cascade runs five barrier-separated stages:
//   1. approximate count of the (predicate-filtered) small table,
//   2. per-partition Bloom filters over the small keys, OR-reduced,
//   3. broadcast of the merged filter to every worker,
//   4. filtering of the big table by condition1 and filter membership,
//   5. hash shuffle of both sides and per-partition sort-merge join.
// Two baselines share the same inputs: a plain shuffle join (no filter) and
// a broadcast hash join. The nested-loop oracle is the ground truth for all
// three.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "bloomjoin/bloom.hpp"
#include "bloomjoin/data.hpp"

namespace bloomjoin {

class WorkerPool;

enum class Algorithm { cascade, shuffle, broadcast };

std::string_view algorithm_name(Algorithm algorithm) noexcept;
// Throws InvalidArgument on unknown names.
Algorithm parse_algorithm(std::string_view name);

struct JoinConfig {
    double epsilon = 0.01;
    std::size_t shuffle_partitions = 200;
    std::chrono::nanoseconds count_budget = std::chrono::nanoseconds::max();
    std::size_t worker_threads = 0;  // 0: BLOOMJOIN_THREADS or hardware concurrency
    double safety_factor = 1.2;
    std::uint64_t seed = 42;
    double sel_big = 1.0;    // condition1
    double sel_small = 1.0;  // condition2
    std::size_t broadcast_max_rows = 50'000'000;
};

// Throws InvalidArgument when an invariant of JoinConfig is violated.
void validate(const JoinConfig& config);

struct CountEstimate {
    std::uint64_t estimate = 0;
    std::size_t scanned_partitions = 0;
    std::size_t total_partitions = 0;
    bool exact = false;
};

struct PhaseTimings {
    std::chrono::nanoseconds t_count{0};
    std::chrono::nanoseconds t_bloom_build{0};
    std::chrono::nanoseconds t_broadcast{0};
    std::chrono::nanoseconds t_filter_join{0};
    std::uint64_t bytes_broadcast = 0;
    std::uint64_t filtered_kept = 0;
    std::uint64_t filtered_dropped = 0;
    std::uint64_t result_rows = 0;
};

double to_millis(std::chrono::nanoseconds d) noexcept;

struct JoinedRow {
    std::uint64_t key = 0;
    std::int64_t attribute1 = 0;  // big-side payload
    std::int64_t attribute2 = 0;  // small-side payload

    friend auto operator<=>(const JoinedRow&, const JoinedRow&) = default;
};

struct JoinResult {
    std::vector<std::vector<JoinedRow>> partitions;

    std::size_t row_count() const noexcept;
    // All rows in (key, attribute1, attribute2) order; the multiset view.
    std::vector<JoinedRow> sorted_rows() const;
};

void write_csv(const JoinResult& result, const std::filesystem::path& path);

struct JoinOutcome {
    JoinResult result;
    PhaseTimings timings;
    CountEstimate count;               // cascade only
    std::optional<BloomParams> bloom;  // cascade with epsilon < 1
    std::uint64_t filter_bytes = 0;    // serialized filter (or hash map) size
};

// Scan control for approx_count: called before each partition after the
// first with the number scanned so far; returning false stops the scan.
using ScanContinue = std::function<bool(std::size_t scanned)>;

// Scans whole partitions in seeded-random order. At least one partition is
// always scanned. Throws InvalidArgument on a table with zero partitions.
CountEstimate approx_count(const PartitionedTable& table, std::chrono::nanoseconds budget, std::uint64_t seed);
CountEstimate approx_count(const PartitionedTable& table, const ScanContinue& keep_going, std::uint64_t seed);

BloomFilter build_distributed_bloom(const PartitionedTable& table, const BloomParams& params, WorkerPool& pool);
BloomFilter build_distributed_bloom(const PartitionedTable& table, const BloomParams& params, std::size_t workers);

struct BroadcastStats {
    std::uint64_t serialized_size = 0;
    std::uint32_t fanout_rounds = 0;
    std::uint64_t bytes_broadcast = 0;
    // One handle per worker, all referring to the same received filter.
    std::vector<std::shared_ptr<const BloomFilter>> replicas;
};

// Serializes, "delivers" by deserializing once, and shares the result.
// bytes_broadcast = serialized_size * ceil(log2(max(2, workers))).
BroadcastStats broadcast(const BloomFilter& filter, std::size_t workers);

struct FilterOutcome {
    PartitionedTable table;
    std::uint64_t kept = 0;
    std::uint64_t dropped = 0;
};

// Keeps records matching pred and, when filter is non-null, its membership.
// dropped counts predicate survivors rejected by the filter.
FilterOutcome filter_big_table(const PartitionedTable& big, const BloomFilter* filter, const Predicate& pred,
                               WorkerPool& pool);

// Partition index of key under the seeded shuffle hash.
std::size_t shuffle_partition_of(std::uint64_t key, std::size_t num_partitions, std::uint64_t seed) noexcept;

// Output partition i holds records from input partitions in input order.
PartitionedTable shuffle(const PartitionedTable& table, std::size_t num_partitions, std::uint64_t seed,
                         WorkerPool& pool);

// Sorts both sides by key and merges; emits the full cross product of equal
// key groups, ordered by key.
std::vector<JoinedRow> sort_merge_join(std::vector<Record> left, std::vector<Record> right);

JoinOutcome bloom_cascade_join(const PartitionedTable& big, const PartitionedTable& small, const JoinConfig& config);
JoinOutcome baseline_shuffle_join(const PartitionedTable& big, const PartitionedTable& small,
                                  const JoinConfig& config);
// Throws CapacityError when the filtered small side exceeds
// config.broadcast_max_rows.
JoinOutcome baseline_broadcast_hash_join(const PartitionedTable& big, const PartitionedTable& small,
                                         const JoinConfig& config);
JoinOutcome run_join(Algorithm algorithm, const PartitionedTable& big, const PartitionedTable& small,
                     const JoinConfig& config);

// Brute-force join of big (condition1) with small (condition2), sorted.
std::vector<JoinedRow> nested_loop_oracle(const PartitionedTable& big, const PartitionedTable& small,
                                          const Predicate& big_pred, const Predicate& small_pred);

// Big-side records surviving condition1 whose key has no condition2-surviving
// partner in small: the records a perfect filter would drop.
std::uint64_t count_filtrable(const PartitionedTable& big, const PartitionedTable& small,
                              const Predicate& big_pred, const Predicate& small_pred);

}  // namespace bloomjoin
