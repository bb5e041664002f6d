#include "bloomjoin/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include "bloomjoin/errors.hpp"

namespace bloomjoin {

namespace {

// Unbiased enough for generation (bias < range / 2^64) and, unlike
// std::uniform_int_distribution, identical across standard libraries.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t range) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * range) >> 64);
}

std::int64_t uniform_in(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi_exclusive) {
    return lo + static_cast<std::int64_t>(bounded(rng, static_cast<std::uint64_t>(hi_exclusive - lo)));
}

template <typename T>
std::size_t decimal_width(T value) {
    char buf[24];
    auto res = std::to_chars(buf, buf + sizeof buf, value);
    return static_cast<std::size_t>(res.ptr - buf);
}

void check_selectivity(double sel, const char* what) {
    if (!(sel > 0.0 && sel <= 1.0))
        throw InvalidArgument(std::string(what) + " must lie in (0, 1], got " + std::to_string(sel));
}

}  // namespace

std::string_view schema_name(Schema schema) noexcept {
    switch (schema) {
        case Schema::orders: return "orders";
        case Schema::lineitem: return "lineitem";
        case Schema::generic: return "generic";
    }
    return "generic";
}

std::string_view csv_header(Schema schema) noexcept {
    switch (schema) {
        case Schema::orders: return "o_orderkey,o_totalprice,o_filter";
        case Schema::lineitem: return "l_orderkey,l_extendedprice,l_filter";
        case Schema::generic: return "key,payload,filter";
    }
    return "key,payload,filter";
}

std::size_t PartitionedTable::row_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : partitions) n += p.size();
    return n;
}

std::vector<Record> PartitionedTable::flatten() const {
    std::vector<Record> out;
    out.reserve(row_count());
    for (const auto& p : partitions) out.insert(out.end(), p.begin(), p.end());
    return out;
}

void validate(const GenConfig& config) {
    if (!(config.scale_factor > 0.0)) throw InvalidArgument("scale_factor must be positive");
    if (config.min_lines_per_order < 1 || config.max_lines_per_order < config.min_lines_per_order)
        throw InvalidArgument("lines_per_order range must satisfy 1 <= min <= max");
    check_selectivity(config.sel_big, "sel_big");
    check_selectivity(config.sel_small, "sel_small");
}

GeneratedData generate(const GenConfig& config) {
    validate(config);
    const auto n_orders = static_cast<std::uint64_t>(std::llround(config.scale_factor * kOrdersPerScaleFactor));
    const auto line_span = static_cast<std::uint64_t>(config.max_lines_per_order - config.min_lines_per_order + 1);

    std::mt19937_64 rng(config.seed);
    std::vector<Record> orders;
    std::vector<Record> lines;
    orders.reserve(n_orders);
    lines.reserve(n_orders * 4);

    for (std::uint64_t key = 1; key <= n_orders; ++key) {
        orders.push_back({key, uniform_in(rng, 100'000, 50'000'000), uniform_in(rng, 0, kFilterDomain)});
        const auto n_lines = config.min_lines_per_order + static_cast<int>(bounded(rng, line_span));
        for (int line = 0; line < n_lines; ++line)
            lines.push_back({key, uniform_in(rng, 90'000, 10'500'000), uniform_in(rng, 0, kFilterDomain)});
    }

    GeneratedData out;
    out.orders.schema = Schema::orders;
    out.orders.partitions.push_back(std::move(orders));
    out.lineitem.schema = Schema::lineitem;
    out.lineitem.partitions.push_back(std::move(lines));
    return out;
}

std::int64_t Predicate::threshold() const {
    check_selectivity(selectivity, "predicate selectivity");
    return std::llround(selectivity * static_cast<double>(kFilterDomain));
}

void check_predicate(Schema schema, const Predicate& pred) {
    if (pred.which == Condition::condition1 && schema == Schema::orders)
        throw SchemaError("condition1 filters lineitem.l_filter; orders has no such column");
    if (pred.which == Condition::condition2 && schema == Schema::lineitem)
        throw SchemaError("condition2 filters orders.o_filter; lineitem has no such column");
    check_selectivity(pred.selectivity, "predicate selectivity");
}

PartitionedTable apply_predicate(const PartitionedTable& table, const Predicate& pred) {
    check_predicate(table.schema, pred);
    const std::int64_t threshold = pred.threshold();
    PartitionedTable out;
    out.schema = table.schema;
    out.partitions.reserve(table.partitions.size());
    for (const auto& part : table.partitions) {
        auto& dst = out.partitions.emplace_back();
        for (const auto& r : part)
            if (r.filter_attr < threshold) dst.push_back(r);
    }
    return out;
}

std::size_t csv_row_width(const Record& r) {
    return decimal_width(r.key) + decimal_width(r.payload) + decimal_width(r.filter_attr) + 3;
}

PartitionedTable partition(const PartitionedTable& table, const PartitionPolicy& policy) {
    const std::vector<Record> rows = table.flatten();
    PartitionedTable out;
    out.schema = table.schema;

    if (const auto* by_count = std::get_if<ByCount>(&policy)) {
        const std::size_t n = by_count->partitions == 0 ? 1 : by_count->partitions;
        const std::size_t base = rows.size() / n;
        const std::size_t extra = rows.size() % n;
        auto it = rows.begin();
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t len = base + (i < extra ? 1 : 0);
            out.partitions.emplace_back(it, it + static_cast<std::ptrdiff_t>(len));
            it += static_cast<std::ptrdiff_t>(len);
        }
        return out;
    }

    const std::size_t target = std::max<std::size_t>(1, std::get<ByBytes>(policy).target_bytes);
    std::size_t used = 0;
    out.partitions.emplace_back();
    for (const auto& r : rows) {
        const std::size_t width = csv_row_width(r);
        if (!out.partitions.back().empty() && used + width > target) {
            out.partitions.emplace_back();
            used = 0;
        }
        out.partitions.back().push_back(r);
        used += width;
    }
    return out;
}

PartitionedTable load_csv(const std::filesystem::path& path, Schema schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());

    PartitionedTable table;
    table.schema = schema;
    auto& rows = table.partitions.emplace_back();

    std::string line;
    std::size_t line_no = 0;
    auto trim_cr = [](std::string& s) {
        if (!s.empty() && s.back() == '\r') s.pop_back();
    };

    if (!std::getline(in, line)) throw ParseError("missing header row", 1);
    ++line_no;
    trim_cr(line);
    if (line != csv_header(schema)) {
        throw ParseError("header '" + line + "' does not match " + std::string(schema_name(schema)) + " schema '" +
                             std::string(csv_header(schema)) + "'",
                         line_no);
    }

    while (std::getline(in, line)) {
        ++line_no;
        trim_cr(line);
        if (line.empty()) continue;

        const char* p = line.data();
        const char* end = p + line.size();
        auto field = [&](auto& value, const char* name, bool last) {
            auto [ptr, ec] = std::from_chars(p, end, value);
            if (ec != std::errc{} || ptr == p) throw ParseError(std::string("invalid ") + name + " field", line_no);
            if (last ? ptr != end : (ptr == end || *ptr != ','))
                throw ParseError(std::string("unexpected text after ") + name + " field", line_no);
            p = last ? ptr : ptr + 1;
        };

        Record r;
        field(r.key, "key", false);
        field(r.payload, "payload", false);
        field(r.filter_attr, "filter", true);
        if (r.key == 0) throw ParseError("key must be >= 1", line_no);
        rows.push_back(r);
    }
    return table;
}

void write_csv(const PartitionedTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << csv_header(table.schema) << '\n';
    std::string buf;
    char num[24];
    for (const auto& part : table.partitions) {
        for (const auto& r : part) {
            buf.clear();
            buf.append(num, std::to_chars(num, num + sizeof num, r.key).ptr);
            buf.push_back(',');
            buf.append(num, std::to_chars(num, num + sizeof num, r.payload).ptr);
            buf.push_back(',');
            buf.append(num, std::to_chars(num, num + sizeof num, r.filter_attr).ptr);
            buf.push_back('\n');
            out << buf;
        }
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace bloomjoin
