#include "bloomjoin/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bloomjoin/errors.hpp"

namespace bloomjoin::bench {

namespace {

constexpr std::string_view kResultsHeader =
    "algorithm,epsilon,repetition,seed,t_count_ms,t_bloom_build_ms,t_broadcast_ms,t_filter_join_ms,"
    "bytes_broadcast,filtered_kept,filtered_dropped,result_rows,m_bits,k_hashes,n_expected,filter_bytes,"
    "count_estimate,n_filtrable";

double seconds(std::chrono::nanoseconds d) { return static_cast<double>(d.count()) / 1e9; }

std::string format_double(double v) {
    char buf[32];
    return {buf, std::to_chars(buf, buf + sizeof buf, v).ptr};
}

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

bool fits_model(const ExperimentResult& r) { return r.algorithm == Algorithm::cascade && r.m_bits > 0; }

template <typename T>
T parse_field(std::string_view text, std::size_t line, std::string_view column) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ParseError("invalid value '" + std::string(text) + "' in column " + std::string(column), line);
    return value;
}

std::chrono::nanoseconds parse_millis(std::string_view text, std::size_t line, std::string_view column) {
    return std::chrono::nanoseconds(std::llround(parse_field<double>(text, line, column) * 1e6));
}

}  // namespace

std::vector<double> log_grid(double lo, double hi, std::size_t points) {
    std::vector<double> grid;
    if (points == 0) return grid;
    if (points == 1) return {lo};
    grid.reserve(points);
    const double step = std::log(hi / lo) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) grid.push_back(lo * std::exp(step * static_cast<double>(i)));
    grid.back() = hi;
    return grid;
}

std::vector<double> default_epsilon_grid() { return log_grid(1e-4, 0.5, 23); }

SweepConfig default_sweep_config() {
    SweepConfig config;
    config.data.scale_factor = 0.01;
    config.data.seed = 42;
    config.join.sel_small = 0.2;
    config.join.sel_big = 1.0;
    return config;
}

void validate(const SweepConfig& config) {
    if (config.epsilons.empty()) throw InvalidArgument("sweep: epsilon list is empty");
    if (config.repetitions < 1) throw InvalidArgument("sweep: repetitions must be >= 1");
    for (double e : config.epsilons)
        if (!(e > 0.0 && e <= 1.0)) throw InvalidArgument("sweep: epsilon " + std::to_string(e) + " outside (0, 1]");
    bloomjoin::validate(config.data);
    bloomjoin::validate(config.join);
}

std::vector<ExperimentResult> run_sweep(const SweepConfig& config, const Progress& progress) {
    validate(config);

    const GeneratedData data = generate(config.data);
    const PartitionedTable small = partition(data.orders, config.input_partitioning);
    const PartitionedTable big = partition(data.lineitem, config.input_partitioning);

    std::optional<std::uint64_t> filtrable;
    if (big.row_count() <= config.filtrable_row_limit) {
        filtrable = count_filtrable(big, small, {Condition::condition1, config.join.sel_big},
                                    {Condition::condition2, config.join.sel_small});
    }

    const std::size_t baselines = (config.include_shuffle ? 1 : 0) + (config.include_broadcast ? 1 : 0);
    const std::size_t total = config.epsilons.size() * config.repetitions + baselines * config.repetitions;
    std::size_t done = 0;

    auto run_one = [&](Algorithm algorithm, double epsilon, std::size_t rep) {
        JoinConfig jc = config.join;
        jc.epsilon = epsilon;
        JoinOutcome outcome;
        try {
            outcome = run_join(algorithm, big, small, jc);
        } catch (const std::exception& e) {
            throw SweepError(std::string(algorithm_name(algorithm)) + " run failed at epsilon=" +
                                 format_double(epsilon) + " repetition=" + std::to_string(rep) + ": " + e.what(),
                             epsilon, rep);
        }
        ExperimentResult r;
        r.algorithm = algorithm;
        r.epsilon = epsilon;
        r.repetition = rep;
        r.seed = jc.seed;
        r.timings = outcome.timings;
        if (outcome.bloom) {
            r.m_bits = outcome.bloom->m_bits;
            r.k_hashes = outcome.bloom->k_hashes;
            r.n_expected = outcome.bloom->n_expected;
        }
        r.filter_bytes = outcome.filter_bytes;
        r.count_estimate = outcome.count.estimate;
        r.n_filtrable = filtrable;
        if (progress) progress(++done, total);
        return r;
    };

    if (config.warmup) {
        JoinConfig jc = config.join;
        jc.epsilon = config.epsilons.front();
        (void)bloom_cascade_join(big, small, jc);
    }

    // Executed repetition-major so slow periods spread over the grid;
    // stored (epsilon, repetition)-major.
    const std::size_t reps = config.repetitions;
    const std::size_t cascades = config.epsilons.size() * reps;
    std::vector<ExperimentResult> results(total);
    for (std::size_t rep = 0; rep < reps; ++rep) {
        for (std::size_t i = 0; i < config.epsilons.size(); ++i)
            results[i * reps + rep] = run_one(Algorithm::cascade, config.epsilons[i], rep);
        std::size_t slot = cascades + rep * baselines;
        if (config.include_shuffle) results[slot++] = run_one(Algorithm::shuffle, 1.0, rep);
        if (config.include_broadcast) results[slot++] = run_one(Algorithm::broadcast, 1.0, rep);
    }
    return results;
}

FitSummary fit_and_optimize(const std::vector<ExperimentResult>& results, const costmodel::SolveOptions& options) {
    std::vector<costmodel::SizeObservation> size_obs;
    std::vector<costmodel::EpsObservation> eps_obs;
    std::set<double> levels;
    std::set<std::uint64_t> sizes;
    std::vector<double> n_values;
    for (const auto& r : results) {
        if (!fits_model(r)) continue;
        size_obs.push_back({static_cast<double>(r.m_bits), seconds(r.timings.t_bloom_build)});
        eps_obs.push_back({r.epsilon, seconds(r.timings.t_filter_join)});
        levels.insert(r.epsilon);
        sizes.insert(r.m_bits);
        n_values.push_back(static_cast<double>(r.n_expected));
    }
    if (levels.size() < 4 || sizes.size() < 2) {
        throw Underdetermined("fit needs cascade runs at >= 4 distinct epsilon values below 1 (have " +
                              std::to_string(levels.size()) + ") and >= 2 distinct filter sizes (have " +
                              std::to_string(sizes.size()) + ")");
    }

    FitSummary summary;
    summary.n_elements = median(n_values);
    summary.bloom = costmodel::fit_bloom_model(size_obs);
    summary.bloom_eps = costmodel::to_eps_space(summary.bloom, summary.n_elements);
    summary.join = costmodel::fit_join_model(eps_obs);
    summary.optimum = costmodel::solve_optimal_epsilon(summary.bloom_eps, summary.join, options);
    if (summary.bloom.clamped || !summary.join.converged) summary.optimum.warning = true;
    return summary;
}

TrendCheck check_trends(const std::vector<ExperimentResult>& results) {
    std::map<double, std::pair<std::vector<double>, std::vector<double>>> by_eps;
    std::vector<double> all_bloom, all_join;
    for (const auto& r : results) {
        if (!fits_model(r)) continue;
        auto& [bloom, join] = by_eps[r.epsilon];
        bloom.push_back(to_millis(r.timings.t_bloom_build));
        join.push_back(to_millis(r.timings.t_filter_join));
        all_bloom.push_back(bloom.back());
        all_join.push_back(join.back());
    }

    TrendCheck check;
    for (const auto& [eps, samples] : by_eps) {
        check.epsilons.push_back(eps);
        check.median_bloom_ms.push_back(median(samples.first));
        check.median_filter_join_ms.push_back(median(samples.second));
    }
    check.overall_median_bloom_ms = median(all_bloom);
    check.overall_median_filter_join_ms = median(all_join);
    check.bloom_non_increasing = !check.epsilons.empty();
    for (std::size_t i = 1; i < check.median_bloom_ms.size(); ++i)
        if (check.median_bloom_ms[i] > check.median_bloom_ms[i - 1]) check.bloom_non_increasing = false;
    check.join_dominates =
        !check.epsilons.empty() && check.overall_median_filter_join_ms > check.overall_median_bloom_ms;
    return check;
}

void write_results_csv(const std::vector<ExperimentResult>& results, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << kResultsHeader << '\n';
    for (const auto& r : results) {
        const auto& t = r.timings;
        out << algorithm_name(r.algorithm) << ',' << format_double(r.epsilon) << ',' << r.repetition << ','
            << r.seed << ',' << format_double(to_millis(t.t_count)) << ','
            << format_double(to_millis(t.t_bloom_build)) << ',' << format_double(to_millis(t.t_broadcast)) << ','
            << format_double(to_millis(t.t_filter_join)) << ',' << t.bytes_broadcast << ',' << t.filtered_kept
            << ',' << t.filtered_dropped << ',' << t.result_rows << ',' << r.m_bits << ',' << r.k_hashes << ','
            << r.n_expected << ',' << r.filter_bytes << ',' << r.count_estimate << ',';
        if (r.n_filtrable) out << *r.n_filtrable;
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<ExperimentResult> load_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader) throw ParseError("unexpected results.csv header", 1);

    std::vector<ExperimentResult> results;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::string_view rest(line);
        for (;;) {
            const auto comma = rest.find(',');
            f.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (f.size() != 18) throw ParseError("expected 18 columns, got " + std::to_string(f.size()), line_no);

        ExperimentResult r;
        try {
            r.algorithm = parse_algorithm(f[0]);
        } catch (const InvalidArgument& e) {
            throw ParseError(e.what(), line_no);
        }
        r.epsilon = parse_field<double>(f[1], line_no, "epsilon");
        r.repetition = parse_field<std::size_t>(f[2], line_no, "repetition");
        r.seed = parse_field<std::uint64_t>(f[3], line_no, "seed");
        r.timings.t_count = parse_millis(f[4], line_no, "t_count_ms");
        r.timings.t_bloom_build = parse_millis(f[5], line_no, "t_bloom_build_ms");
        r.timings.t_broadcast = parse_millis(f[6], line_no, "t_broadcast_ms");
        r.timings.t_filter_join = parse_millis(f[7], line_no, "t_filter_join_ms");
        r.timings.bytes_broadcast = parse_field<std::uint64_t>(f[8], line_no, "bytes_broadcast");
        r.timings.filtered_kept = parse_field<std::uint64_t>(f[9], line_no, "filtered_kept");
        r.timings.filtered_dropped = parse_field<std::uint64_t>(f[10], line_no, "filtered_dropped");
        r.timings.result_rows = parse_field<std::uint64_t>(f[11], line_no, "result_rows");
        r.m_bits = parse_field<std::uint64_t>(f[12], line_no, "m_bits");
        r.k_hashes = parse_field<std::uint32_t>(f[13], line_no, "k_hashes");
        r.n_expected = parse_field<std::uint64_t>(f[14], line_no, "n_expected");
        r.filter_bytes = parse_field<std::uint64_t>(f[15], line_no, "filter_bytes");
        r.count_estimate = parse_field<std::uint64_t>(f[16], line_no, "count_estimate");
        if (!f[17].empty()) r.n_filtrable = parse_field<std::uint64_t>(f[17], line_no, "n_filtrable");
        results.push_back(r);
    }
    return results;
}

void write_model_json(const FitSummary& s, const std::filesystem::path& path) {
    nlohmann::ordered_json doc;
    doc["c0"] = s.bloom_eps.c0;
    doc["c1"] = s.bloom_eps.c1;
    doc["k1"] = s.bloom.k1;
    doc["k2"] = s.bloom.k2;
    doc["l1"] = s.join.l1;
    doc["l2"] = s.join.l2;
    doc["a"] = s.join.a;
    doc["b"] = s.join.b;
    doc["n_elements"] = s.n_elements;
    doc["residuals"] = {{"bloom_rms", s.bloom.residual_rms},
                        {"join_rms", s.join.residual_rms},
                        {"derivative", s.optimum.residual}};
    doc["method"] = costmodel::method_name(s.optimum.method);
    doc["epsilon_star"] = s.optimum.epsilon_star;
    doc["iterations"] = s.optimum.iterations;
    doc["warning"] = s.optimum.warning;
    doc["bloom_clamped"] = s.bloom.clamped;
    doc["join_converged"] = s.join.converged;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << '\n';
}

FitSummary load_model_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("model.json: ") + e.what(), 0);
    }

    auto number = [&](const char* key, double fallback, bool required) {
        if (!doc.contains(key)) {
            if (required) throw ParseError(std::string("model.json: missing '") + key + "'", 0);
            return fallback;
        }
        if (!doc[key].is_number()) throw ParseError(std::string("model.json: '") + key + "' is not a number", 0);
        return doc[key].get<double>();
    };

    FitSummary s;
    s.bloom_eps.c0 = number("c0", 0.0, true);
    s.bloom_eps.c1 = number("c1", 0.0, true);
    s.join.l1 = number("l1", 0.0, true);
    s.join.l2 = number("l2", 0.0, true);
    s.join.a = number("a", 0.0, true);
    s.join.b = number("b", 0.0, true);
    s.bloom.k1 = number("k1", 0.0, false);
    s.bloom.k2 = number("k2", s.bloom_eps.c0, false);
    s.n_elements = number("n_elements", 0.0, false);
    if (doc.contains("residuals") && doc["residuals"].is_object()) {
        const auto& res = doc["residuals"];
        s.bloom.residual_rms = res.value("bloom_rms", 0.0);
        s.join.residual_rms = res.value("join_rms", 0.0);
        s.optimum.residual = res.value("derivative", 0.0);
    }
    if (doc.contains("method") && doc["method"].is_string()) {
        try {
            s.optimum.method = costmodel::parse_method(doc["method"].get<std::string>());
        } catch (const InvalidArgument& e) {
            throw ParseError(std::string("model.json: ") + e.what(), 0);
        }
    }
    s.optimum.epsilon_star = number("epsilon_star", 1.0, false);
    s.optimum.iterations = static_cast<std::size_t>(number("iterations", 0.0, false));
    s.optimum.warning = doc.value("warning", false);
    s.bloom.clamped = doc.value("bloom_clamped", false);
    s.join.converged = doc.value("join_converged", true);
    return s;
}

void write_plotdata_csv(const std::vector<ExperimentResult>& results, const FitSummary& s,
                        const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "kind,epsilon,bloom_model_s,join_model_s,total_model_s,observed_bloom_s,observed_join_s\n";

    auto model_columns = [&](double e) {
        const double bloom = costmodel::eval_bloom_model(s.bloom_eps, e);
        const double join = costmodel::eval_join_model(s.join, e);
        return format_double(bloom) + ',' + format_double(join) + ',' + format_double(bloom + join);
    };

    for (double e : log_grid(costmodel::kDefaultEpsMin, 1.0, 200))
        out << "model," << format_double(e) << ',' << model_columns(e) << ",,\n";
    for (const auto& r : results) {
        if (!fits_model(r)) continue;
        out << "observed," << format_double(r.epsilon) << ',' << model_columns(r.epsilon) << ','
            << format_double(seconds(r.timings.t_bloom_build)) << ','
            << format_double(seconds(r.timings.t_filter_join)) << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void emit_report(const std::vector<ExperimentResult>& results, const FitSummary& summary,
                 const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    write_results_csv(results, directory / "results.csv");
    write_model_json(summary, directory / "model.json");
    write_plotdata_csv(results, summary, directory / "plotdata.csv");
}

}  // namespace bloomjoin::bench
