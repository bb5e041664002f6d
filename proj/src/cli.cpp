#include "bloomjoin/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <ostream>

#include "bloomjoin/bench.hpp"
#include "bloomjoin/costmodel.hpp"
#include "bloomjoin/data.hpp"
#include "bloomjoin/engine.hpp"
#include "bloomjoin/errors.hpp"
#include "bloomjoin/worker_pool.hpp"

namespace bloomjoin::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Flag combinations CLI11 cannot check on its own.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GlobalOptions {
    std::uint64_t seed = 42;
    std::size_t threads = 0;
    std::string output_dir = ".";
};

struct GenOptions {
    double scale = 0.001;
    std::string out;
};

struct RunOptions {
    std::string big;
    std::string small;
    double epsilon = 0.01;
    std::size_t partitions = 200;
    std::string algorithm = "cascade";
    double sel_big = 1.0;
    double sel_small = 1.0;
    double safety_factor = 1.2;
    std::size_t input_partitions = 16;
    std::size_t broadcast_cap = 50'000'000;
    std::string result;
};

struct SweepOptions {
    double scale = 0.01;
    std::vector<double> epsilons;
    std::size_t reps = 3;
    double sel_big = 1.0;
    double sel_small = 0.2;
    std::size_t partitions = 200;
    std::size_t input_partitions = 16;
    bool baselines = false;
    bool no_warmup = false;
};

struct FitOptions {
    std::string results;
};

struct OptimizeOptions {
    std::string model;
    double tolerance = 1e-12;
    double eps_min = costmodel::kDefaultEpsMin;
};

struct ReportOptions {
    std::string results;
    std::string model;
};

Schema detect_schema(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string header;
    std::getline(in, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    for (Schema s : {Schema::orders, Schema::lineitem, Schema::generic})
        if (header == csv_header(s)) return s;
    throw ParseError("unrecognized CSV header '" + header + "' in " + path.string(), 1);
}

ordered_json timings_json(const PhaseTimings& t) {
    ordered_json j;
    j["t_count_ms"] = to_millis(t.t_count);
    j["t_bloom_build_ms"] = to_millis(t.t_bloom_build);
    j["t_broadcast_ms"] = to_millis(t.t_broadcast);
    j["t_filter_join_ms"] = to_millis(t.t_filter_join);
    j["bytes_broadcast"] = t.bytes_broadcast;
    j["filtered_kept"] = t.filtered_kept;
    j["filtered_dropped"] = t.filtered_dropped;
    j["result_rows"] = t.result_rows;
    return j;
}

ordered_json optimum_json(const costmodel::OptimalEpsilon& o) {
    ordered_json j;
    j["epsilon_star"] = o.epsilon_star;
    j["method"] = costmodel::method_name(o.method);
    j["residual"] = o.residual;
    j["iterations"] = o.iterations;
    j["warning"] = o.warning;
    return j;
}

ordered_json model_json(const bench::FitSummary& s) {
    ordered_json j;
    j["c0"] = s.bloom_eps.c0;
    j["c1"] = s.bloom_eps.c1;
    j["k1"] = s.bloom.k1;
    j["k2"] = s.bloom.k2;
    j["l1"] = s.join.l1;
    j["l2"] = s.join.l2;
    j["a"] = s.join.a;
    j["b"] = s.join.b;
    j["residuals"] = {{"bloom_rms", s.bloom.residual_rms}, {"join_rms", s.join.residual_rms}};
    j["optimum"] = optimum_json(s.optimum);
    return j;
}

int do_gen(const GlobalOptions& g, const GenOptions& o, std::ostream& out) {
    GenConfig config;
    config.scale_factor = o.scale;
    config.seed = g.seed;
    try {
        validate(config);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const GeneratedData data = generate(config);
    const fs::path dir(o.out);
    fs::create_directories(dir);
    write_csv(data.orders, dir / "orders.csv");
    write_csv(data.lineitem, dir / "lineitem.csv");

    ordered_json j;
    j["scale_factor"] = o.scale;
    j["seed"] = g.seed;
    j["orders"] = {{"path", (dir / "orders.csv").string()}, {"rows", data.orders.row_count()}};
    j["lineitem"] = {{"path", (dir / "lineitem.csv").string()}, {"rows", data.lineitem.row_count()}};
    out << j.dump() << '\n';
    return kExitOk;
}

int do_run(const GlobalOptions& g, const RunOptions& o, std::ostream& out) {
    JoinConfig config;
    config.epsilon = o.epsilon;
    config.shuffle_partitions = o.partitions;
    config.worker_threads = resolve_thread_count(g.threads);
    config.safety_factor = o.safety_factor;
    config.seed = g.seed;
    config.sel_big = o.sel_big;
    config.sel_small = o.sel_small;
    config.broadcast_max_rows = o.broadcast_cap;
    const Algorithm algorithm = parse_algorithm(o.algorithm);
    try {
        validate(config);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }

    const PartitionedTable big = partition(load_csv(o.big, detect_schema(o.big)), ByCount{o.input_partitions});
    const PartitionedTable small = partition(load_csv(o.small, detect_schema(o.small)), ByCount{o.input_partitions});
    const JoinOutcome outcome = run_join(algorithm, big, small, config);
    if (!o.result.empty()) write_csv(outcome.result, o.result);

    ordered_json j;
    j["algorithm"] = algorithm_name(algorithm);
    j["epsilon"] = o.epsilon;
    j["shuffle_partitions"] = o.partitions;
    j["threads"] = config.worker_threads;
    j["seed"] = g.seed;
    j["big_rows"] = big.row_count();
    j["small_rows"] = small.row_count();
    j["timings"] = timings_json(outcome.timings);
    j["result_rows"] = outcome.timings.result_rows;
    if (outcome.bloom) {
        j["bloom"] = {{"n_expected", outcome.bloom->n_expected},
                      {"m_bits", outcome.bloom->m_bits},
                      {"k_hashes", outcome.bloom->k_hashes},
                      {"serialized_bytes", outcome.filter_bytes}};
    }
    if (algorithm == Algorithm::cascade) {
        j["count"] = {{"estimate", outcome.count.estimate},
                      {"scanned_partitions", outcome.count.scanned_partitions},
                      {"total_partitions", outcome.count.total_partitions},
                      {"exact", outcome.count.exact}};
    }
    out << j.dump() << '\n';
    return kExitOk;
}

int do_sweep(const GlobalOptions& g, const SweepOptions& o, std::ostream& out, std::ostream& err) {
    bench::SweepConfig config = bench::default_sweep_config();
    if (!o.epsilons.empty()) config.epsilons = o.epsilons;
    config.repetitions = o.reps;
    config.data.scale_factor = o.scale;
    config.data.seed = g.seed;
    config.input_partitioning = ByCount{o.input_partitions};
    config.join.seed = g.seed;
    config.join.worker_threads = resolve_thread_count(g.threads);
    config.join.shuffle_partitions = o.partitions;
    config.join.sel_big = o.sel_big;
    config.join.sel_small = o.sel_small;
    config.include_shuffle = o.baselines;
    config.include_broadcast = o.baselines;
    config.warmup = !o.no_warmup;
    try {
        bench::validate(config);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }

    const auto results = bench::run_sweep(config);
    const fs::path dir(g.output_dir);
    fs::create_directories(dir);
    bench::write_results_csv(results, dir / "results.csv");

    ordered_json j;
    j["results"] = (dir / "results.csv").string();
    j["rows"] = results.size();
    try {
        const bench::FitSummary summary = bench::fit_and_optimize(results);
        bench::write_model_json(summary, dir / "model.json");
        bench::write_plotdata_csv(results, summary, dir / "plotdata.csv");
        j["model"] = model_json(summary);
    } catch (const Underdetermined& e) {
        err << "sweep: model not fitted: " << e.what() << '\n';
    }
    out << j.dump() << '\n';
    return kExitOk;
}

int do_fit(const GlobalOptions& g, const FitOptions& o, std::ostream& out) {
    const auto results = bench::load_results_csv(o.results);
    const bench::FitSummary summary = bench::fit_and_optimize(results);
    const fs::path dir(g.output_dir);
    fs::create_directories(dir);
    bench::write_model_json(summary, dir / "model.json");
    ordered_json j = model_json(summary);
    j["model_path"] = (dir / "model.json").string();
    out << j.dump() << '\n';
    return kExitOk;
}

int do_optimize(const OptimizeOptions& o, std::ostream& out) {
    const bench::FitSummary model = bench::load_model_json(o.model);
    costmodel::SolveOptions options;
    options.tolerance = o.tolerance;
    options.eps_min = o.eps_min;
    out << optimum_json(costmodel::solve_optimal_epsilon(model.bloom_eps, model.join, options)).dump() << '\n';
    return kExitOk;
}

int do_report(const GlobalOptions& g, const ReportOptions& o, std::ostream& out) {
    const auto results = bench::load_results_csv(o.results);
    const bench::FitSummary summary = o.model.empty() ? bench::fit_and_optimize(results) : bench::load_model_json(o.model);
    const fs::path dir(g.output_dir);
    bench::emit_report(results, summary, dir);
    ordered_json j;
    j["results"] = (dir / "results.csv").string();
    j["model"] = (dir / "model.json").string();
    j["plotdata"] = (dir / "plotdata.csv").string();
    j["observations"] = results.size();
    out << j.dump() << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bloom-filtered cascade join engine, benchmarks and cost model", "bloomjoin"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--seed", g.seed, "Seed for data generation, hashing and partition order");
    app.add_option("--threads", g.threads, "Worker threads (default: $BLOOMJOIN_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    app.add_option("--output-dir", g.output_dir, "Directory for sweep/fit/report outputs");

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate orders.csv and lineitem.csv");
    gen_cmd->add_option("--scale", gen.scale, "TPC-H style scale factor")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();

    RunOptions run_opts;
    auto* run_cmd = app.add_subcommand("run", "Execute one join and print timings as JSON");
    run_cmd->add_option("--big", run_opts.big, "Big table CSV (lineitem or generic)")->required();
    run_cmd->add_option("--small", run_opts.small, "Small table CSV (orders or generic)")->required();
    run_cmd->add_option("--epsilon", run_opts.epsilon, "Bloom filter false-positive rate in (0, 1]")
        ->check(CLI::Range(0.0, 1.0));
    run_cmd->add_option("--partitions", run_opts.partitions, "Shuffle partitions")->check(CLI::PositiveNumber);
    run_cmd->add_option("--algorithm", run_opts.algorithm, "cascade | shuffle | broadcast")
        ->check(CLI::IsMember({"cascade", "shuffle", "broadcast"}));
    run_cmd->add_option("--sel-big", run_opts.sel_big, "condition1 selectivity on the big table")
        ->check(CLI::Range(0.0, 1.0));
    run_cmd->add_option("--sel-small", run_opts.sel_small, "condition2 selectivity on the small table")
        ->check(CLI::Range(0.0, 1.0));
    run_cmd->add_option("--safety-factor", run_opts.safety_factor, "Multiplier on the count estimate")
        ->check(CLI::Range(1.0, 1e9));
    run_cmd->add_option("--input-partitions", run_opts.input_partitions, "Partitions per loaded table")
        ->check(CLI::PositiveNumber);
    run_cmd->add_option("--broadcast-cap", run_opts.broadcast_cap, "Row cap for the broadcast hash join");
    run_cmd->add_option("--result", run_opts.result, "Write joined rows to this CSV");

    SweepOptions sweep;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run an epsilon sweep and write results.csv");
    sweep_cmd->add_option("--scale", sweep.scale, "Scale factor")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--epsilons", sweep.epsilons, "Epsilon values (default: 23-point log grid)")
        ->check(CLI::Range(0.0, 1.0))
        ->delimiter(',');
    sweep_cmd->add_option("--reps", sweep.reps, "Repetitions per epsilon")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--sel-big", sweep.sel_big, "condition1 selectivity")->check(CLI::Range(0.0, 1.0));
    sweep_cmd->add_option("--sel-small", sweep.sel_small, "condition2 selectivity")->check(CLI::Range(0.0, 1.0));
    sweep_cmd->add_option("--partitions", sweep.partitions, "Shuffle partitions")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--input-partitions", sweep.input_partitions, "Partitions per generated table")
        ->check(CLI::PositiveNumber);
    sweep_cmd->add_flag("--baselines", sweep.baselines, "Also run shuffle and broadcast baselines");
    sweep_cmd->add_flag("--no-warmup", sweep.no_warmup, "Skip the discarded warm-up run");

    FitOptions fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit both time models from results.csv and write model.json");
    fit_cmd->add_option("--results", fit.results, "results.csv from a sweep")->required();

    OptimizeOptions opt;
    auto* opt_cmd = app.add_subcommand("optimize", "Solve for the optimal epsilon from model.json");
    opt_cmd->add_option("--model", opt.model, "model.json")->required();
    opt_cmd->add_option("--tol", opt.tolerance, "Relative convergence tolerance")->check(CLI::PositiveNumber);
    opt_cmd->add_option("--eps-min", opt.eps_min, "Lower end of the search interval")
        ->check(CLI::Range(0.0, 1.0));

    ReportOptions report;
    auto* report_cmd = app.add_subcommand("report", "Write results.csv, model.json and plotdata.csv");
    report_cmd->add_option("--results", report.results, "results.csv from a sweep")->required();
    report_cmd->add_option("--model", report.model, "model.json (fitted from results when omitted)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "bloomjoin: " << e.what() << '\n' << "Run with --help for usage.\n";
        return kExitUsage;
    }

    try {
        if (*gen_cmd) return do_gen(g, gen, out);
        if (*run_cmd) return do_run(g, run_opts, out);
        if (*sweep_cmd) return do_sweep(g, sweep, out, err);
        if (*fit_cmd) return do_fit(g, fit, out);
        if (*opt_cmd) return do_optimize(opt, out);
        if (*report_cmd) return do_report(g, report, out);
    } catch (const UsageError& e) {
        err << "bloomjoin: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "bloomjoin: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace bloomjoin::cli
