#pragma once

// TPC-H-shaped Orders/Lineitem tables and the partitioned layout the join
// engine operates on.
//
// Both tables share one record shape: the join key (order key), one payload
// column projected into the join result, and one uniformly distributed
// column that threshold predicates filter on.
//
//   schema    key column   payload            predicate column
//   orders    o_orderkey   o_totalprice       o_filter     (condition2)
//   lineitem  l_orderkey   l_extendedprice    l_filter     (condition1)
//   generic   key          payload            filter       (either)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <variant>
#include <vector>

namespace bloomjoin {

struct Record {
    std::uint64_t key = 0;
    std::int64_t payload = 0;
    std::int64_t filter_attr = 0;

    friend auto operator<=>(const Record&, const Record&) = default;
};

enum class Schema { orders, lineitem, generic };

std::string_view schema_name(Schema schema) noexcept;
// Column header line for the schema, without trailing newline.
std::string_view csv_header(Schema schema) noexcept;

struct PartitionedTable {
    Schema schema = Schema::generic;
    std::vector<std::vector<Record>> partitions;

    std::size_t row_count() const noexcept;
    std::vector<Record> flatten() const;

    friend bool operator==(const PartitionedTable&, const PartitionedTable&) = default;
};

// Predicate columns are uniform over [0, kFilterDomain).
inline constexpr std::int64_t kFilterDomain = 1'000'000;
inline constexpr double kOrdersPerScaleFactor = 1'500'000.0;

struct GenConfig {
    double scale_factor = 0.001;
    std::uint64_t seed = 42;
    int min_lines_per_order = 1;
    int max_lines_per_order = 7;
    double sel_big = 1.0;    // condition1 selectivity on lineitem
    double sel_small = 1.0;  // condition2 selectivity on orders
};

// Throws InvalidArgument on non-positive scale, bad line range or
// selectivity outside (0, 1].
void validate(const GenConfig& config);

struct GeneratedData {
    PartitionedTable orders;    // small side
    PartitionedTable lineitem;  // big side
};

// Both tables come back as a single partition; call partition() to split.
GeneratedData generate(const GenConfig& config);

// condition1 filters the big table (lineitem), condition2 the small (orders).
enum class Condition { condition1, condition2 };

struct Predicate {
    Condition which = Condition::condition1;
    double selectivity = 1.0;

    // Records with filter_attr below this value satisfy the predicate.
    std::int64_t threshold() const;
    bool matches(const Record& r) const { return r.filter_attr < threshold(); }
};

// Keeps the partition layout. Throws SchemaError if the schema lacks the
// predicate column and InvalidArgument if selectivity is outside (0, 1].
PartitionedTable apply_predicate(const PartitionedTable& table, const Predicate& pred);
void check_predicate(Schema schema, const Predicate& pred);

struct ByCount {
    std::size_t partitions = 1;
};
struct ByBytes {
    std::size_t target_bytes = std::size_t{128} << 20;
};
using PartitionPolicy = std::variant<ByCount, ByBytes>;

// Redistributes records contiguously in their current order.
PartitionedTable partition(const PartitionedTable& table, const PartitionPolicy& policy);

// Byte width of the record as emitted by write_csv, newline included.
std::size_t csv_row_width(const Record& r);

// Throws ParseError (with 1-based line number) on malformed input and
// std::runtime_error if the file cannot be opened. Loads into one partition.
PartitionedTable load_csv(const std::filesystem::path& path, Schema schema);
void write_csv(const PartitionedTable& table, const std::filesystem::path& path);

}  // namespace bloomjoin
