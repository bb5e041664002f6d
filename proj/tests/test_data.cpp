#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "bloomjoin/data.hpp"
#include "bloomjoin/errors.hpp"
#include "support.hpp"

using namespace bloomjoin;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "bloomjoin_test_data";
    fs::create_directories(dir);
    return dir / name;
}

std::vector<Record> sorted(std::vector<Record> rows) {
    std::sort(rows.begin(), rows.end());
    return rows;
}

}  // namespace

TEST_CASE("generate at scale 0.001") {
    GenConfig config;
    config.scale_factor = 0.001;
    config.seed = 42;
    const auto data = generate(config);

    CHECK(data.orders.row_count() == 1500);
    CHECK(data.lineitem.row_count() >= 1500);
    CHECK(data.lineitem.row_count() <= 10'500);
    CHECK(data.orders.schema == Schema::orders);
    CHECK(data.lineitem.schema == Schema::lineitem);

    std::set<std::uint64_t> order_keys;
    for (const auto& r : data.orders.flatten()) order_keys.insert(r.key);
    CHECK(order_keys.size() == 1500);
    CHECK(*order_keys.begin() == 1);
    CHECK(*order_keys.rbegin() == 1500);

    std::map<std::uint64_t, int> lines_per_order;
    for (const auto& r : data.lineitem.flatten()) {
        REQUIRE(order_keys.contains(r.key));
        ++lines_per_order[r.key];
    }
    CHECK(lines_per_order.size() == 1500);
    for (const auto& [key, n] : lines_per_order) {
        CHECK(n >= 1);
        CHECK(n <= 7);
    }

    SUBCASE("deterministic") {
        const auto again = generate(config);
        CHECK(again.orders == data.orders);
        CHECK(again.lineitem == data.lineitem);
        config.seed = 43;
        CHECK_FALSE(generate(config).lineitem == data.lineitem);
    }
}

TEST_CASE("generate validates config") {
    GenConfig config;
    config.scale_factor = 0.0;
    CHECK_THROWS_AS(generate(config), InvalidArgument);
    config.scale_factor = -1.0;
    CHECK_THROWS_AS(generate(config), InvalidArgument);
    config.scale_factor = 0.001;
    config.min_lines_per_order = 3;
    config.max_lines_per_order = 2;
    CHECK_THROWS_AS(generate(config), InvalidArgument);
}

TEST_CASE("apply_predicate") {
    GenConfig config;
    config.scale_factor = 0.1;  // 150000 orders
    const auto data = generate(config);
    const auto orders = partition(data.orders, ByCount{8});

    SUBCASE("selectivity 1 keeps everything") {
        CHECK(apply_predicate(orders, {Condition::condition2, 1.0}) == orders);
    }
    SUBCASE("selectivity 0.25 within binomial bound") {
        PartitionedTable first;
        first.schema = Schema::orders;
        auto rows = orders.flatten();
        rows.resize(100'000);
        first.partitions.push_back(rows);
        const auto kept = apply_predicate(first, {Condition::condition2, 0.25}).row_count();
        const double bound = 3.0 * std::sqrt(0.25 * 0.75 * 1e5);
        CHECK(std::abs(static_cast<double>(kept) - 25'000.0) <= bound);
    }
    SUBCASE("achieved selectivity within 2% for large tables") {
        for (double sel : {0.05, 0.2, 0.5, 0.9}) {
            const auto kept = apply_predicate(orders, {Condition::condition2, sel});
            const double achieved = static_cast<double>(kept.row_count()) / static_cast<double>(orders.row_count());
            CHECK(std::abs(achieved - sel) <= 0.02);
            CHECK(kept.partitions.size() == orders.partitions.size());
        }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(apply_predicate(orders, {Condition::condition2, 0.0}), InvalidArgument);
        CHECK_THROWS_AS(apply_predicate(orders, {Condition::condition2, 1.5}), InvalidArgument);
        CHECK_THROWS_AS(apply_predicate(orders, {Condition::condition1, 0.5}), SchemaError);
        CHECK_THROWS_AS(apply_predicate(data.lineitem, {Condition::condition2, 0.5}), SchemaError);
    }
}

TEST_CASE("partition by count") {
    std::vector<std::uint64_t> keys(1000);
    for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = i + 1;
    const auto table = testing::generic_table(keys);

    const auto one = partition(table, ByCount{1});
    CHECK(one.partitions.size() == 1);
    CHECK(one.row_count() == 1000);

    const auto four = partition(table, ByCount{4});
    REQUIRE(four.partitions.size() == 4);
    for (const auto& p : four.partitions) CHECK(p.size() == 250);
    CHECK(four.flatten() == table.flatten());

    const auto seven = partition(table, ByCount{7});
    CHECK(seven.flatten() == table.flatten());
    for (const auto& p : seven.partitions) CHECK((p.size() == 142 || p.size() == 143));
}

TEST_CASE("partition by bytes") {
    // generic rows of fixed CSV width
    PartitionedTable table;
    table.schema = Schema::generic;
    auto& rows = table.partitions.emplace_back();
    for (std::uint64_t i = 0; i < 10'000; ++i)
        rows.push_back({1'000'000'000 + i, 100'000'000'000'000'000LL, 1'000'000'000'000'000'000LL});
    // 10 + 18 + 19 digits, two commas, newline
    const std::size_t width = csv_row_width(rows.front());
    CHECK(width == 50);

    // 10^4 rows * 50 bytes = 5e5 bytes at 5e4 per partition
    const auto parts = partition(table, ByBytes{50'000});
    CHECK(parts.partitions.size() == 10);
    for (const auto& p : parts.partitions) CHECK(p.size() == 1000);
    CHECK(parts.flatten() == table.flatten());

    SUBCASE("generated orders split into about ten parts") {
        GenConfig config;
        config.scale_factor = 0.01;
        const auto orders = generate(config).orders;
        std::size_t total = 0;
        for (const auto& r : orders.flatten()) total += csv_row_width(r);
        const auto split = partition(orders, ByBytes{total / 10});
        CHECK(split.partitions.size() >= 10);
        CHECK(split.partitions.size() <= 11);
        CHECK(sorted(split.flatten()) == sorted(orders.flatten()));
    }
    SUBCASE("oversized rows get their own partition") {
        const auto tiny = partition(table, ByBytes{1});
        CHECK(tiny.partitions.size() == 10'000);
    }
}

TEST_CASE("partitioning preserves the record multiset") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto f = testing::random_fixture(seed, 5000, 100);
        const auto expected = sorted(f.big.flatten());
        for (std::size_t n : {1, 3, 16, 200}) CHECK(sorted(partition(f.big, ByCount{n}).flatten()) == expected);
        for (std::size_t bytes : {64, 4096, 1 << 20})
            CHECK(sorted(partition(f.big, ByBytes{bytes}).flatten()) == expected);
    }
}

TEST_CASE("CSV round trip") {
    GenConfig config;
    config.scale_factor = 0.002;
    const auto data = generate(config);
    const auto path = temp_path("lineitem.csv");
    write_csv(partition(data.lineitem, ByCount{3}), path);
    const auto back = load_csv(path, Schema::lineitem);
    CHECK(back.flatten() == data.lineitem.flatten());

    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "l_orderkey,l_extendedprice,l_filter");

    SUBCASE("extreme values") {
        PartitionedTable t;
        t.schema = Schema::generic;
        t.partitions.push_back({{1, -9'223'372'036'854'775'807LL - 1, 9'223'372'036'854'775'807LL},
                                {18'446'744'073'709'551'615ULL, 0, -1}});
        const auto p = temp_path("extreme.csv");
        write_csv(t, p);
        CHECK(load_csv(p, Schema::generic) == t);
    }
}

TEST_CASE("CSV errors") {
    SUBCASE("header only is an empty table") {
        const auto p = temp_path("empty.csv");
        std::ofstream(p) << "o_orderkey,o_totalprice,o_filter\n";
        const auto t = load_csv(p, Schema::orders);
        CHECK(t.row_count() == 0);
        CHECK(t.partitions.size() == 1);
    }
    SUBCASE("non-numeric key names the line") {
        const auto p = temp_path("bad.csv");
        std::ofstream(p) << "key,payload,filter\n1,2,3\n4,5,6\nabc,7,8\n";
        try {
            load_csv(p, Schema::generic);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 4);
            CHECK(std::string(e.what()).find("line 4") != std::string::npos);
        }
    }
    SUBCASE("wrong column count") {
        const auto p = temp_path("short.csv");
        std::ofstream(p) << "key,payload,filter\n1,2\n";
        CHECK_THROWS_AS(load_csv(p, Schema::generic), ParseError);
        std::ofstream(p) << "key,payload,filter\n1,2,3,4\n";
        CHECK_THROWS_AS(load_csv(p, Schema::generic), ParseError);
    }
    SUBCASE("zero key") {
        const auto p = temp_path("zero.csv");
        std::ofstream(p) << "key,payload,filter\n0,2,3\n";
        CHECK_THROWS_AS(load_csv(p, Schema::generic), ParseError);
    }
    SUBCASE("header mismatch") {
        const auto p = temp_path("hdr.csv");
        std::ofstream(p) << "key,payload,filter\n1,2,3\n";
        CHECK_THROWS_AS(load_csv(p, Schema::orders), ParseError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_csv(temp_path("nope.csv"), Schema::orders), std::runtime_error); }
}
