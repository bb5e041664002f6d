#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "bloomjoin/bloom.hpp"
#include "bloomjoin/costmodel.hpp"
#include "bloomjoin/errors.hpp"
#include "support.hpp"

using namespace bloomjoin;
using namespace bloomjoin::costmodel;

namespace {

// Reference formulas, written out independently in long double.
long double ref_total(long double e, long double c0, long double c1, const JoinTimeModel& j) {
    const long double p = static_cast<long double>(j.a) * e + static_cast<long double>(j.b);
    return c0 - c1 * std::log(e) + static_cast<long double>(j.l1) + static_cast<long double>(j.l2) * e +
           p * std::log(p);
}

double ref_derivative(double e, const BloomTimeModelEps& bl, const JoinTimeModel& j) {
    return j.a * std::log(j.a * e + j.b) + j.a + j.l2 - bl.c1 / e;
}

double derivative_scale(double e, const BloomTimeModelEps& bl, const JoinTimeModel& j) {
    return std::abs(j.a * std::log(j.a * e + j.b)) + std::abs(j.a) + std::abs(j.l2) + bl.c1 / e;
}

// Oracle: sign check at the ends, bisection in between, else the cheaper end.
double oracle_optimum(const BloomTimeModelEps& bl, const JoinTimeModel& j, double eps_min) {
    auto f = [&](double e) { return ref_derivative(e, bl, j); };
    if (f(eps_min) < 0.0 && f(1.0) > 0.0) return testing::bisect_root(f, eps_min, 1.0);
    return model_total(eps_min, bl, j) < model_total(1.0, bl, j) ? eps_min : 1.0;
}

std::vector<double> log_grid(double lo, double hi, std::size_t points) {
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i)
        g[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(i) /
                                           static_cast<double>(points - 1));
    g.back() = hi;
    return g;
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
}

struct RandomModel {
    BloomTimeModelEps bloom;
    JoinTimeModel join;
};

RandomModel random_model(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    RandomModel m;
    m.bloom.c0 = 10.0 * unit(rng);
    m.bloom.c1 = log_uniform(rng, 1e-2, 10.0);
    m.join.l1 = 100.0 * unit(rng);
    m.join.l2 = 100.0 * unit(rng);
    m.join.a = log_uniform(rng, 1e-2, 1e4);
    m.join.b = log_uniform(rng, 1e-2, 1e3);
    return m;
}

}  // namespace

TEST_CASE("eval_bloom_model") {
    const BloomTimeModelEps m{2.0, 3.0};
    CHECK(eval_bloom_model(m, 1.0) == 2.0);
    CHECK(eval_bloom_model(m, std::exp(-1.0)) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK_THROWS_AS(eval_bloom_model(m, 0.0), InvalidArgument);
    CHECK_THROWS_AS(eval_bloom_model(m, 1.5), InvalidArgument);
    CHECK_THROWS_AS(eval_bloom_model(m, std::nan("")), InvalidArgument);
}

TEST_CASE("size-space and eps-space bloom models agree") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const BloomTimeModel size{log_uniform(rng, 1e-11, 1e-7), log_uniform(rng, 1e-3, 10.0)};
        const double n = std::floor(log_uniform(rng, 10.0, 1e8));
        const auto eps_model = to_eps_space(size, n);
        CHECK(eps_model.c0 == size.k2);
        for (double e : log_grid(1e-6, 0.999, 50)) {
            // exact (unrounded) filter size for n, e
            const double m = sized_bits(n, e);
            const double a = eval_bloom_size_model(size, m);
            const double b = eval_bloom_model(eps_model, e);
            REQUIRE(std::abs(a - b) <= 1e-9 * std::abs(a));
        }
    }
}

TEST_CASE("eval_join_model") {
    JoinTimeModel j;
    j.l1 = 4.0;
    j.l2 = 7.0;
    j.a = 0.0;
    j.b = 1.0;
    CHECK(eval_join_model(j, 0.25) == doctest::Approx(4.0 + 7.0 * 0.25));

    j = {};
    j.b = std::numbers::e;
    for (double e : {1e-6, 0.1, 1.0}) CHECK(eval_join_model(j, e) == doctest::Approx(std::numbers::e));

    SUBCASE("monotone when L2 > 0, A > 0, B >= 1") {
        j = {};
        j.l1 = 1.0;
        j.l2 = 0.5;
        j.a = 30.0;
        j.b = 1.0;
        double previous = -1e300;
        for (double e : log_grid(1e-6, 1.0, 400)) {
            const double v = eval_join_model(j, e);
            CHECK(v > previous);
            CHECK(j.a * std::log(j.a * e + j.b) + j.a + j.l2 > 0.0);
            previous = v;
        }
    }
    SUBCASE("domain errors") {
        j = {};
        j.a = -2.0;
        j.b = 1.0;
        CHECK_THROWS_AS(eval_join_model(j, 0.5), DomainError);
        CHECK_THROWS_AS(eval_join_model(j, 0.9), DomainError);
        CHECK_NOTHROW(eval_join_model(j, 0.4));
        CHECK_THROWS_AS(eval_join_model(j, 0.0), InvalidArgument);
    }
}

TEST_CASE("model_total is the sum of the evaluators") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = random_model(rng);
        for (double e : log_grid(1e-6, 1.0, 30)) {
            const double total = model_total(e, m.bloom, m.join);
            CHECK(total == eval_bloom_model(m.bloom, e) + eval_join_model(m.join, e));
            const long double ref = ref_total(e, m.bloom.c0, m.bloom.c1, m.join);
            CHECK(std::abs(total - static_cast<double>(ref)) <= 1e-12 * std::abs(static_cast<double>(ref)) + 1e-12);
        }
    }
}

TEST_CASE("total_derivative") {
    SUBCASE("C1 = 0 with increasing join model stays positive") {
        JoinTimeModel j;
        j.a = 5.0;
        j.b = 1.0;
        for (double e : log_grid(1e-6, 1.0, 200)) CHECK(total_derivative(e, {0.0, 0.0}, j) > 0.0);
    }
    SUBCASE("matches central differences over random models") {
        // long double reference with h = 1e-4 * eps
        std::mt19937_64 rng(23);
        for (int trial = 0; trial < 100; ++trial) {
            const auto m = random_model(rng);
            for (double e : log_grid(1e-6, 1.0, 40)) {
                const long double x = e;
                const long double h = 1e-4L * x;
                const long double hi = std::min(1.0L, x + h);
                const long double lo = hi - 2.0L * h;
                const long double fd = (ref_total(hi, m.bloom.c0, m.bloom.c1, m.join) -
                                        ref_total(lo, m.bloom.c0, m.bloom.c1, m.join)) /
                                       (hi - lo);
                // one-sided shift at eps = 1 moves the evaluation point by h
                const double at = static_cast<double>(0.5L * (hi + lo));
                const double analytic = total_derivative(at, m.bloom, m.join);
                const double scale = derivative_scale(at, m.bloom, m.join);
                REQUIRE(std::abs(analytic - static_cast<double>(fd)) <= 1e-6 * scale);
            }
        }
    }
    SUBCASE("vanishes at the bisection root") {
        const BloomTimeModelEps bl{0.0, 1.0};
        JoinTimeModel j;
        j.a = 10.0;
        j.b = 1.0;
        const double root = testing::bisect_root([&](double e) { return ref_derivative(e, bl, j); }, 1e-6, 1.0);
        CHECK(std::abs(total_derivative(root, bl, j)) <= 1e-12 * derivative_scale(root, bl, j));
    }
}

TEST_CASE("fit_bloom_model") {
    const double k1 = 2e-9;
    const double k2 = 0.5;
    std::vector<SizeObservation> obs;
    for (double m : log_grid(1e5, 1e9, 30)) obs.push_back({m, k1 * m + k2});

    SUBCASE("noiseless recovery") {
        const auto fit = fit_bloom_model(obs);
        CHECK(std::abs(fit.k1 - k1) <= 1e-12 * k1);
        CHECK(std::abs(fit.k2 - k2) <= 1e-12 * k2);
        CHECK(fit.residual_rms <= 1e-12);
        CHECK_FALSE(fit.clamped);
    }
    SUBCASE("1% gaussian noise, 50 points, seeded") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> noise(0.0, 0.01);
            std::vector<SizeObservation> noisy;
            for (double m : log_grid(1e6, 1e9, 50)) noisy.push_back({m, (k1 * m + k2) * (1.0 + noise(rng))});
            const auto fit = fit_bloom_model(noisy);
            CHECK(std::abs(fit.k1 - k1) <= 0.05 * k1);
            CHECK(std::abs(fit.k2 - k2) <= 0.05 * k2);
        }
    }
    SUBCASE("negative slope is clamped") {
        const std::vector<SizeObservation> down = {{1e6, 3.0}, {2e6, 2.0}, {3e6, 1.0}};
        const auto fit = fit_bloom_model(down);
        CHECK(fit.k1 == 0.0);
        CHECK(fit.k2 == doctest::Approx(2.0));
        CHECK(fit.clamped);
    }
    SUBCASE("underdetermined") {
        const std::vector<SizeObservation> same = {{1e6, 1.0}, {1e6, 1.1}};
        CHECK_THROWS_AS(fit_bloom_model(same), Underdetermined);
        CHECK_THROWS_AS(fit_bloom_model(std::vector<SizeObservation>{}), Underdetermined);
    }
}

TEST_CASE("fit_join_model") {
    JoinTimeModel truth;
    truth.l1 = 10.0;
    truth.l2 = 50.0;
    truth.a = 3000.0;
    truth.b = 200.0;
    const auto grid = log_grid(0.001, 0.5, 20);

    SUBCASE("noiseless predictions within 0.1%") {
        std::vector<EpsObservation> obs;
        for (double e : grid) obs.push_back({e, eval_join_model(truth, e)});
        const auto fit = fit_join_model(obs);
        CHECK(fit.b > 0.0);
        CHECK(fit.a + fit.b > 0.0);
        for (double e : grid) {
            const double want = eval_join_model(truth, e);
            CHECK(std::abs(eval_join_model(fit, e) - want) <= 1e-3 * std::abs(want));
        }
    }
    SUBCASE("1% noise: prediction RMS within 2%") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            std::mt19937_64 rng(100 + seed);
            std::normal_distribution<double> noise(0.0, 0.01);
            std::vector<EpsObservation> obs;
            for (double e : grid)
                for (int rep = 0; rep < 3; ++rep) obs.push_back({e, eval_join_model(truth, e) * (1.0 + noise(rng))});
            const auto fit = fit_join_model(obs);
            double sum = 0.0;
            for (double e : grid) {
                const double rel = (eval_join_model(fit, e) - eval_join_model(truth, e)) / eval_join_model(truth, e);
                sum += rel * rel;
            }
            CHECK(std::sqrt(sum / static_cast<double>(grid.size())) <= 0.02);
        }
    }
    SUBCASE("constant data") {
        std::vector<EpsObservation> obs;
        for (double e : grid) obs.push_back({e, 42.0});
        const auto fit = fit_join_model(obs);
        for (double e : grid) CHECK(std::abs(eval_join_model(fit, e) - 42.0) <= 1e-6 * 42.0);
        CHECK(std::abs(fit.l2) <= 1e-3);
        CHECK(std::abs(fit.a) <= 1e-3);
    }
    SUBCASE("underdetermined") {
        std::vector<EpsObservation> three = {{0.1, 1.0}, {0.2, 2.0}, {0.3, 3.0}};
        CHECK_THROWS_AS(fit_join_model(three), Underdetermined);
        three.push_back({0.3, 3.5});
        CHECK_THROWS_AS(fit_join_model(three), Underdetermined);
        three.push_back({0.4, 4.0});
        CHECK_NOTHROW(fit_join_model(three));
    }
    SUBCASE("seeded fits repeat") {
        std::vector<EpsObservation> obs;
        for (double e : grid) obs.push_back({e, eval_join_model(truth, e) + std::sin(1e3 * e)});
        const auto a = fit_join_model(obs);
        const auto b = fit_join_model(obs);
        CHECK(a.l1 == b.l1);
        CHECK(a.a == b.a);
    }
}

TEST_CASE("solve_optimal_epsilon") {
    SUBCASE("Newton example against the bisection oracle") {
        const BloomTimeModelEps bl{0.0, 1.0};
        JoinTimeModel j;
        j.a = 10.0;
        j.b = 1.0;
        const auto opt = solve_optimal_epsilon(bl, j);
        const double oracle = oracle_optimum(bl, j, kDefaultEpsMin);
        CHECK(oracle > 0.01);
        CHECK(oracle < 0.1);
        CHECK(std::abs(opt.epsilon_star - oracle) <= 1e-9);
        CHECK(opt.method != Method::boundary);
        CHECK_FALSE(opt.warning);
        CHECK(opt.residual <= 1e-12 * derivative_scale(opt.epsilon_star, bl, j));

        // the grid minimum is one of the two grid points around eps*
        const auto g = log_grid(kDefaultEpsMin, 1.0, 1000);
        std::size_t best = 0;
        for (std::size_t i = 1; i < g.size(); ++i)
            if (model_total(g[i], bl, j) < model_total(g[best], bl, j)) best = i;
        const auto upper = std::lower_bound(g.begin(), g.end(), opt.epsilon_star) - g.begin();
        CHECK((static_cast<std::ptrdiff_t>(best) == upper || static_cast<std::ptrdiff_t>(best) == upper - 1));
    }
    SUBCASE("flat bloom cost picks eps_min") {
        JoinTimeModel j;
        j.l2 = 1.0;
        j.a = 5.0;
        j.b = 2.0;
        const auto opt = solve_optimal_epsilon({3.0, 0.0}, j);
        CHECK(opt.epsilon_star == kDefaultEpsMin);
        CHECK(opt.method == Method::boundary);
    }
    SUBCASE("flat join model picks 1") {
        JoinTimeModel j;
        j.l1 = 5.0;
        j.b = 3.0;
        const auto opt = solve_optimal_epsilon({1.0, 0.5}, j);
        CHECK(opt.epsilon_star == 1.0);
        CHECK(opt.method == Method::boundary);
    }
    SUBCASE("custom eps_min and tolerance") {
        JoinTimeModel j;
        j.a = 1e4;
        j.b = 1.0;
        SolveOptions o;
        o.eps_min = 0.2;
        const auto opt = solve_optimal_epsilon({0.0, 1.0}, j, o);
        CHECK(opt.epsilon_star == 0.2);
        o.eps_min = 1e-9;
        o.tolerance = 1e-6;
        const auto loose = solve_optimal_epsilon({0.0, 1.0}, j, o);
        CHECK(std::abs(loose.epsilon_star - oracle_optimum({0.0, 1.0}, j, 1e-9)) <= 1e-5 * loose.epsilon_star);
    }
    SUBCASE("invalid models") {
        JoinTimeModel j;
        j.b = 0.0;
        CHECK_THROWS_AS(solve_optimal_epsilon({0.0, 1.0}, j), InvalidArgument);
        j.b = 1.0;
        j.a = -1.0;
        CHECK_THROWS_AS(solve_optimal_epsilon({0.0, 1.0}, j), InvalidArgument);
        j.a = 1.0;
        CHECK_THROWS_AS(solve_optimal_epsilon({0.0, -1.0}, j), InvalidArgument);
        CHECK_THROWS_AS(solve_optimal_epsilon({0.0, std::nan("")}, j), InvalidArgument);
    }
    SUBCASE("random well-posed models") {
        std::mt19937_64 rng(24);
        const auto g = log_grid(kDefaultEpsMin, 1.0, 1000);
        int interior = 0;
        for (int trial = 0; trial < 100; ++trial) {
            const auto m = random_model(rng);
            const auto opt = solve_optimal_epsilon(m.bloom, m.join);
            const double oracle = oracle_optimum(m.bloom, m.join, kDefaultEpsMin);
            CAPTURE(trial);
            REQUIRE(std::abs(opt.epsilon_star - oracle) <= 1e-9 * oracle);
            CHECK(opt.epsilon_star > 0.0);
            CHECK(opt.epsilon_star <= 1.0);
            if (opt.method != Method::boundary) {
                ++interior;
                CHECK(opt.residual <= 1e-12 * derivative_scale(opt.epsilon_star, m.bloom, m.join));
            }
            const double at_star = model_total(opt.epsilon_star, m.bloom, m.join);
            for (double e : g) REQUIRE(at_star <= model_total(e, m.bloom, m.join));
        }
        CHECK(interior >= 50);
    }
}

TEST_CASE("method names") {
    for (auto m : {Method::newton, Method::bisection, Method::boundary}) CHECK(parse_method(method_name(m)) == m);
    CHECK_THROWS_AS(parse_method("secant"), InvalidArgument);
}
