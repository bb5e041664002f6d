#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "bloomjoin/costmodel.hpp"
#include "bloomjoin/data.hpp"
#include "bloomjoin/engine.hpp"

namespace bloomjoin::bench {

// 23 log-spaced points over [1e-4, 0.5].
std::vector<double> default_epsilon_grid();
std::vector<double> log_grid(double lo, double hi, std::size_t points);

struct SweepConfig {
    std::vector<double> epsilons = default_epsilon_grid();
    std::size_t repetitions = 3;
    GenConfig data;
    PartitionPolicy input_partitioning = ByCount{16};
    JoinConfig join;
    bool include_shuffle = false;
    bool include_broadcast = false;
    bool warmup = true;
    // N_filtrable is computed only when the big table has at most this many rows.
    std::size_t filtrable_row_limit = 10'000'000;
};

// The desk-scale fixture used for trend checks: SF 0.01, condition2 keeping
// 20% of orders, 23-point grid, 3 repetitions.
SweepConfig default_sweep_config();

void validate(const SweepConfig& config);

struct ExperimentResult {
    Algorithm algorithm = Algorithm::cascade;
    double epsilon = 0.0;
    std::size_t repetition = 0;
    std::uint64_t seed = 0;
    PhaseTimings timings;
    std::uint64_t m_bits = 0;
    std::uint32_t k_hashes = 0;
    std::uint64_t n_expected = 0;
    std::uint64_t filter_bytes = 0;
    std::uint64_t count_estimate = 0;
    std::optional<std::uint64_t> n_filtrable;
};

// Engine failures are rethrown as SweepError naming the failing run.
class SweepError : public std::runtime_error {
public:
    SweepError(const std::string& what, double epsilon, std::size_t repetition)
        : std::runtime_error(what), epsilon(epsilon), repetition(repetition) {}
    double epsilon;
    std::size_t repetition;
};

using Progress = std::function<void(std::size_t done, std::size_t total)>;

// Cascade runs are ordered by (epsilon, repetition); baseline runs follow,
// one per repetition, with epsilon recorded as 1.
std::vector<ExperimentResult> run_sweep(const SweepConfig& config, const Progress& progress = {});

struct FitSummary {
    costmodel::BloomTimeModel bloom;
    costmodel::BloomTimeModelEps bloom_eps;
    costmodel::JoinTimeModel join;
    costmodel::OptimalEpsilon optimum;
    double n_elements = 0.0;
};

// Fits both models on the cascade runs that built a filter and solves for
// the optimal epsilon. Throws Underdetermined listing what is missing.
FitSummary fit_and_optimize(const std::vector<ExperimentResult>& results,
                            const costmodel::SolveOptions& options = {});

struct TrendCheck {
    std::vector<double> epsilons;              // ascending
    std::vector<double> median_bloom_ms;       // per epsilon
    std::vector<double> median_filter_join_ms; // per epsilon
    double overall_median_bloom_ms = 0.0;
    double overall_median_filter_join_ms = 0.0;
    bool bloom_non_increasing = false;
    bool join_dominates = false;
};

TrendCheck check_trends(const std::vector<ExperimentResult>& results);

// Writes results.csv, model.json and plotdata.csv into directory.
void emit_report(const std::vector<ExperimentResult>& results, const FitSummary& summary,
                 const std::filesystem::path& directory);

void write_results_csv(const std::vector<ExperimentResult>& results, const std::filesystem::path& path);
std::vector<ExperimentResult> load_results_csv(const std::filesystem::path& path);

void write_model_json(const FitSummary& summary, const std::filesystem::path& path);
FitSummary load_model_json(const std::filesystem::path& path);

// 200 model rows on a log grid over [eps_min, 1] followed by one row per
// fitted observation.
void write_plotdata_csv(const std::vector<ExperimentResult>& results, const FitSummary& summary,
                        const std::filesystem::path& path);

}  // namespace bloomjoin::bench
