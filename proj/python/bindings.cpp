#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bloomjoin/bloom.hpp"
#include "bloomjoin/costmodel.hpp"
#include "bloomjoin/data.hpp"
#include "bloomjoin/engine.hpp"
#include "bloomjoin/errors.hpp"

namespace py = pybind11;
using namespace bloomjoin;
namespace cm = bloomjoin::costmodel;

namespace {

using Row = std::tuple<std::uint64_t, std::int64_t, std::int64_t>;

Schema parse_schema(const std::string& name) {
    if (name == "orders") return Schema::orders;
    if (name == "lineitem") return Schema::lineitem;
    if (name == "generic") return Schema::generic;
    throw InvalidArgument("unknown schema '" + name + "'");
}

PartitionedTable table_from_rows(const std::string& schema, const std::vector<Row>& rows, std::size_t partitions) {
    PartitionedTable t;
    t.schema = parse_schema(schema);
    auto& part = t.partitions.emplace_back();
    part.reserve(rows.size());
    for (const auto& [k, p, f] : rows) part.push_back({k, p, f});
    return partitions == 1 ? t : partition(t, ByCount{partitions});
}

std::vector<Row> rows_of(const PartitionedTable& t) {
    std::vector<Row> out;
    out.reserve(t.row_count());
    for (const auto& r : t.flatten()) out.emplace_back(r.key, r.payload, r.filter_attr);
    return out;
}

std::vector<Row> joined_rows(const std::vector<JoinedRow>& rows) {
    std::vector<Row> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.emplace_back(r.key, r.attribute1, r.attribute2);
    return out;
}

py::dict timings_dict(const PhaseTimings& t) {
    py::dict d;
    d["t_count_ms"] = to_millis(t.t_count);
    d["t_bloom_build_ms"] = to_millis(t.t_bloom_build);
    d["t_broadcast_ms"] = to_millis(t.t_broadcast);
    d["t_filter_join_ms"] = to_millis(t.t_filter_join);
    d["bytes_broadcast"] = t.bytes_broadcast;
    d["filtered_kept"] = t.filtered_kept;
    d["filtered_dropped"] = t.filtered_dropped;
    d["result_rows"] = t.result_rows;
    return d;
}

py::dict optimum_dict(const cm::OptimalEpsilon& o) {
    py::dict d;
    d["epsilon_star"] = o.epsilon_star;
    d["iterations"] = o.iterations;
    d["residual"] = o.residual;
    d["method"] = std::string(cm::method_name(o.method));
    d["warning"] = o.warning;
    return d;
}

cm::JoinTimeModel join_model(double l1, double l2, double a, double b) {
    cm::JoinTimeModel j;
    j.l1 = l1;
    j.l2 = l2;
    j.a = a;
    j.b = b;
    return j;
}

}  // namespace

PYBIND11_MODULE(_bloomjoin, m) {
    m.doc() = "Bloom-filtered cascade join engine and cost model";

    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<IncompatibleFilter>(m, "IncompatibleFilter", PyExc_ValueError);
    py::register_exception<DeserializeError>(m, "DeserializeError", PyExc_ValueError);
    py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
    py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<Underdetermined>(m, "Underdetermined", PyExc_ValueError);

    py::class_<BloomParams>(m, "BloomParams")
        .def_readonly("n_expected", &BloomParams::n_expected)
        .def_readonly("epsilon", &BloomParams::epsilon)
        .def_readonly("m_bits", &BloomParams::m_bits)
        .def_readonly("k_hashes", &BloomParams::k_hashes)
        .def_readonly("hash_seed", &BloomParams::hash_seed)
        .def("__repr__", [](const BloomParams& p) {
            return "BloomParams(m_bits=" + std::to_string(p.m_bits) + ", k_hashes=" + std::to_string(p.k_hashes) +
                   ")";
        });

    m.def("plan_parameters", &plan_parameters, py::arg("n_expected"), py::arg("epsilon"),
          py::arg("hash_seed") = kDefaultBloomSeed);

    py::class_<BloomFilter>(m, "BloomFilter")
        .def(py::init<const BloomParams&>())
        .def("insert", &BloomFilter::insert)
        .def("insert_many",
             [](BloomFilter& f, const std::vector<std::uint64_t>& keys) {
                 for (auto k : keys) f.insert(k);
             })
        .def("contains", &BloomFilter::contains)
        .def("__contains__", &BloomFilter::contains)
        .def_property_readonly("params", &BloomFilter::params)
        .def_property_readonly("inserted_count", &BloomFilter::inserted_count)
        .def("popcount", &BloomFilter::popcount)
        .def("serialize",
             [](const BloomFilter& f) {
                 const auto bytes = f.serialize();
                 return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
             })
        .def_static("deserialize",
                    [](const py::bytes& data) {
                        const std::string s = data;
                        return BloomFilter::deserialize(
                            std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
                    })
        .def("__eq__", [](const BloomFilter& a, const BloomFilter& b) { return a == b; });

    m.def("merge", &merge);

    py::class_<PartitionedTable>(m, "Table")
        .def_property_readonly("schema", [](const PartitionedTable& t) { return std::string(schema_name(t.schema)); })
        .def_property_readonly("num_partitions", [](const PartitionedTable& t) { return t.partitions.size(); })
        .def("__len__", &PartitionedTable::row_count)
        .def("rows", &rows_of);

    m.def("table_from_rows", &table_from_rows, py::arg("schema"), py::arg("rows"), py::arg("partitions") = 1);
    m.def(
        "generate",
        [](double scale_factor, std::uint64_t seed) {
            GenConfig g;
            g.scale_factor = scale_factor;
            g.seed = seed;
            auto data = generate(g);
            return std::make_pair(std::move(data.orders), std::move(data.lineitem));
        },
        py::arg("scale_factor"), py::arg("seed") = 42, "Returns (orders, lineitem).");
    m.def(
        "partition", [](const PartitionedTable& t, std::size_t n) { return partition(t, ByCount{n}); },
        py::arg("table"), py::arg("partitions"));
    m.def("load_csv", [](const std::filesystem::path& p, const std::string& schema) {
        return load_csv(p, parse_schema(schema));
    });
    m.def("write_csv", py::overload_cast<const PartitionedTable&, const std::filesystem::path&>(&write_csv));

    m.def(
        "join",
        [](const PartitionedTable& big, const PartitionedTable& small, const std::string& algorithm, double epsilon,
           std::size_t partitions, std::size_t threads, double sel_big, double sel_small, std::uint64_t seed) {
            JoinConfig c;
            c.epsilon = epsilon;
            c.shuffle_partitions = partitions;
            c.worker_threads = threads;
            c.sel_big = sel_big;
            c.sel_small = sel_small;
            c.seed = seed;
            const auto out = run_join(parse_algorithm(algorithm), big, small, c);
            py::dict d;
            d["rows"] = joined_rows(out.result.sorted_rows());
            d["timings"] = timings_dict(out.timings);
            d["filter_bytes"] = out.filter_bytes;
            if (out.bloom) d["bloom"] = *out.bloom;
            return d;
        },
        py::arg("big"), py::arg("small"), py::arg("algorithm") = "cascade", py::arg("epsilon") = 0.01,
        py::arg("partitions") = 200, py::arg("threads") = 0, py::arg("sel_big") = 1.0, py::arg("sel_small") = 1.0,
        py::arg("seed") = 42);

    m.def(
        "nested_loop_oracle",
        [](const PartitionedTable& big, const PartitionedTable& small, double sel_big, double sel_small) {
            return joined_rows(nested_loop_oracle(big, small, {Condition::condition1, sel_big},
                                                  {Condition::condition2, sel_small}));
        },
        py::arg("big"), py::arg("small"), py::arg("sel_big") = 1.0, py::arg("sel_small") = 1.0);

    m.def("fit_bloom_model", [](const std::vector<std::pair<double, double>>& obs) {
        std::vector<cm::SizeObservation> v;
        for (const auto& [mb, s] : obs) v.push_back({mb, s});
        const auto fit = cm::fit_bloom_model(v);
        py::dict d;
        d["k1"] = fit.k1;
        d["k2"] = fit.k2;
        d["residual_rms"] = fit.residual_rms;
        d["clamped"] = fit.clamped;
        return d;
    });
    m.def("fit_join_model", [](const std::vector<std::pair<double, double>>& obs) {
        std::vector<cm::EpsObservation> v;
        for (const auto& [e, s] : obs) v.push_back({e, s});
        const auto fit = cm::fit_join_model(v);
        py::dict d;
        d["l1"] = fit.l1;
        d["l2"] = fit.l2;
        d["a"] = fit.a;
        d["b"] = fit.b;
        d["residual_rms"] = fit.residual_rms;
        d["converged"] = fit.converged;
        return d;
    });
    m.def(
        "model_total",
        [](double e, double c0, double c1, double l1, double l2, double a, double b) {
            return cm::model_total(e, {c0, c1}, join_model(l1, l2, a, b));
        },
        py::arg("epsilon"), py::arg("c0"), py::arg("c1"), py::arg("l1"), py::arg("l2"), py::arg("a"), py::arg("b"));
    m.def(
        "total_derivative",
        [](double e, double c1, double l2, double a, double b) {
            return cm::total_derivative(e, {0.0, c1}, join_model(0.0, l2, a, b));
        },
        py::arg("epsilon"), py::arg("c1"), py::arg("l2"), py::arg("a"), py::arg("b"));
    m.def(
        "solve_optimal_epsilon",
        [](double c0, double c1, double l1, double l2, double a, double b, double tol, double eps_min) {
            cm::SolveOptions o;
            o.tolerance = tol;
            o.eps_min = eps_min;
            return optimum_dict(cm::solve_optimal_epsilon({c0, c1}, join_model(l1, l2, a, b), o));
        },
        py::arg("c0"), py::arg("c1"), py::arg("l1"), py::arg("l2"), py::arg("a"), py::arg("b"),
        py::arg("tol") = 1e-12, py::arg("eps_min") = cm::kDefaultEpsMin);
}
