#include "bloomjoin/costmodel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "bloomjoin/errors.hpp"

namespace bloomjoin::costmodel {

namespace {

constexpr double kSizeFactor = 1.44;

void check_epsilon(double epsilon) {
    if (!(epsilon > 0.0 && epsilon <= 1.0))
        throw InvalidArgument("epsilon must lie in (0, 1], got " + std::to_string(epsilon));
}

double poly(const JoinTimeModel& join, double epsilon) { return join.a * epsilon + join.b; }

double poly_checked(const JoinTimeModel& join, double epsilon) {
    const double p = poly(join, epsilon);
    if (!(p > 0.0)) throw DomainError("A*eps + B must be positive, got " + std::to_string(p));
    return p;
}

double xlogx(double x) { return x * std::log(x); }

// ---- join-model fit -------------------------------------------------------
//
// A and B are mapped to unconstrained coordinates
//   B = exp(beta),  A = B * (exp(sigma) - 1),
// so that B > 0 and A + B = B * exp(sigma) > 0, which keeps A*eps + B
// positive on all of [0, 1].

struct Shape {
    double beta = 0.0;
    double sigma = 0.0;

    double b() const { return std::exp(beta); }
    double a() const { return std::exp(beta) * std::expm1(sigma); }
};

struct Projected {
    double l1 = 0.0;
    double l2 = 0.0;
    double sse = std::numeric_limits<double>::infinity();
};

// For a fixed shape the model is linear in (L1, L2): closed-form OLS.
Projected project(std::span<const EpsObservation> obs, const Shape& shape) {
    const double a = shape.a();
    const double b = shape.b();
    const auto n = static_cast<double>(obs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& o : obs) {
        const double p = a * o.epsilon + b;
        if (!(p > 0.0) || !std::isfinite(p)) return {};
        const double y = o.seconds - xlogx(p);
        sx += o.epsilon;
        sy += y;
        sxx += o.epsilon * o.epsilon;
        sxy += o.epsilon * y;
    }
    const double det = n * sxx - sx * sx;
    Projected out;
    out.l2 = (n * sxy - sx * sy) / det;
    out.l1 = (sy - out.l2 * sx) / n;
    double sse = 0.0;
    for (const auto& o : obs) {
        const double r = o.seconds - (out.l1 + out.l2 * o.epsilon + xlogx(a * o.epsilon + b));
        sse += r * r;
    }
    out.sse = std::isfinite(sse) ? sse : std::numeric_limits<double>::infinity();
    return out;
}

Shape coordinate_descent(std::span<const EpsObservation> obs, Shape start, std::size_t max_sweeps) {
    double best = project(obs, start).sse;
    double step = 0.5;
    for (std::size_t sweep = 0; sweep < max_sweeps && step > 1e-9; ++sweep) {
        bool improved = false;
        for (int coord = 0; coord < 2; ++coord) {
            for (double dir : {+1.0, -1.0}) {
                Shape trial = start;
                (coord == 0 ? trial.beta : trial.sigma) += dir * step;
                const double sse = project(obs, trial).sse;
                if (sse < best) {
                    best = sse;
                    start = trial;
                    improved = true;
                    break;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    return start;
}

struct Refined {
    Shape shape;
    Projected lin;
    bool converged = false;
};

// Levenberg-Marquardt over (L1, L2, beta, sigma) with the analytic Jacobian.
Refined gauss_newton(std::span<const EpsObservation> obs, Shape shape, std::size_t max_iterations) {
    const auto n = static_cast<Eigen::Index>(obs.size());
    Projected lin = project(obs, shape);
    Eigen::Vector4d theta(lin.l1, lin.l2, shape.beta, shape.sigma);

    auto residuals = [&](const Eigen::Vector4d& t, Eigen::VectorXd& r) {
        const double b = std::exp(t[2]);
        const double a = b * std::expm1(t[3]);
        double sse = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double e = obs[static_cast<std::size_t>(i)].epsilon;
            const double p = a * e + b;
            if (!(p > 0.0)) return std::numeric_limits<double>::infinity();
            r[i] = obs[static_cast<std::size_t>(i)].seconds - (t[0] + t[1] * e + xlogx(p));
            sse += r[i] * r[i];
        }
        return std::isfinite(sse) ? sse : std::numeric_limits<double>::infinity();
    };

    Eigen::VectorXd r(n);
    Eigen::VectorXd r_trial(n);
    Eigen::MatrixXd jac(n, 4);
    double sse = residuals(theta, r);
    double lambda = 1e-3;
    bool converged = false;

    for (std::size_t it = 0; it < max_iterations; ++it) {
        const double b = std::exp(theta[2]);
        const double growth = std::exp(theta[3]);
        const double a = b * (growth - 1.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double e = obs[static_cast<std::size_t>(i)].epsilon;
            const double dlog = std::log(a * e + b) + 1.0;  // d(P ln P)/dP
            // dP/dbeta = P, dP/dsigma = B*exp(sigma)*eps
            jac(i, 0) = 1.0;
            jac(i, 1) = e;
            jac(i, 2) = dlog * (a * e + b);
            jac(i, 3) = dlog * b * growth * e;
        }
        const Eigen::Matrix4d jtj = jac.transpose() * jac;
        const Eigen::Vector4d jtr = jac.transpose() * r;
        if (jtr.lpNorm<Eigen::Infinity>() <= 1e-14 * std::max(1.0, jtj.diagonal().maxCoeff())) {
            converged = true;
            break;
        }

        bool accepted = false;
        for (int attempt = 0; attempt < 30; ++attempt) {
            Eigen::Matrix4d damped = jtj;
            damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
            const Eigen::Vector4d delta = damped.colPivHouseholderQr().solve(jtr);
            const Eigen::Vector4d candidate = theta + delta;
            const double trial = residuals(candidate, r_trial);
            if (trial <= sse) {
                const bool tiny = delta.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + theta.lpNorm<Eigen::Infinity>());
                const bool flat = sse - trial <= 1e-15 * sse;
                theta = candidate;
                r.swap(r_trial);
                sse = trial;
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
                if (tiny || flat) converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted || converged) {
            converged = true;
            break;
        }
    }

    Refined out;
    out.shape = {theta[2], theta[3]};
    out.lin = {theta[0], theta[1], sse};
    out.converged = converged;
    return out;
}

}  // namespace

std::string_view method_name(Method method) noexcept {
    switch (method) {
        case Method::newton: return "newton";
        case Method::bisection: return "bisection";
        case Method::boundary: return "boundary";
    }
    return "boundary";
}

Method parse_method(std::string_view name) {
    if (name == "newton") return Method::newton;
    if (name == "bisection") return Method::bisection;
    if (name == "boundary") return Method::boundary;
    throw InvalidArgument("unknown optimizer method '" + std::string(name) + "'");
}

BloomTimeModelEps to_eps_space(const BloomTimeModel& model, double n_elements) {
    return {model.k2, model.k1 * n_elements * kSizeFactor / std::numbers::ln2};
}

double eval_bloom_size_model(const BloomTimeModel& model, double m_bits) { return model.k1 * m_bits + model.k2; }

double eval_bloom_model(const BloomTimeModelEps& model, double epsilon) {
    check_epsilon(epsilon);
    return model.c0 - model.c1 * std::log(epsilon);
}

double eval_join_model(const JoinTimeModel& model, double epsilon) {
    check_epsilon(epsilon);
    return model.l1 + model.l2 * epsilon + xlogx(poly_checked(model, epsilon));
}

double model_total(double epsilon, const BloomTimeModelEps& bloom, const JoinTimeModel& join) {
    return eval_bloom_model(bloom, epsilon) + eval_join_model(join, epsilon);
}

double total_derivative(double epsilon, const BloomTimeModelEps& bloom, const JoinTimeModel& join) {
    check_epsilon(epsilon);
    const double p = poly_checked(join, epsilon);
    return join.a * std::log(p) + join.a + join.l2 - bloom.c1 / epsilon;
}

BloomTimeModel fit_bloom_model(std::span<const SizeObservation> observations) {
    std::set<double> sizes;
    for (const auto& o : observations) sizes.insert(o.m_bits);
    if (sizes.size() < 2)
        throw Underdetermined("bloom model fit needs observations at >= 2 distinct filter sizes, got " +
                              std::to_string(sizes.size()));

    // Centered normal equations; m_bits spans orders of magnitude.
    const auto n = static_cast<double>(observations.size());
    double mean_m = 0.0, mean_t = 0.0;
    for (const auto& o : observations) {
        mean_m += o.m_bits;
        mean_t += o.seconds;
    }
    mean_m /= n;
    mean_t /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& o : observations) {
        sxx += (o.m_bits - mean_m) * (o.m_bits - mean_m);
        sxy += (o.m_bits - mean_m) * (o.seconds - mean_t);
    }

    BloomTimeModel model;
    model.k1 = sxy / sxx;
    model.k2 = mean_t - model.k1 * mean_m;
    if (model.k1 < 0.0) {
        model.k1 = 0.0;
        model.k2 = mean_t;
        model.clamped = true;
    }
    double sse = 0.0;
    for (const auto& o : observations) {
        const double r = o.seconds - eval_bloom_size_model(model, o.m_bits);
        sse += r * r;
    }
    model.residual_rms = std::sqrt(sse / n);
    return model;
}

JoinTimeModel fit_join_model(std::span<const EpsObservation> observations, const JoinFitOptions& options) {
    std::set<double> levels;
    for (const auto& o : observations) {
        check_epsilon(o.epsilon);
        levels.insert(o.epsilon);
    }
    if (observations.size() < 4 || levels.size() < 4)
        throw Underdetermined("join model fit needs >= 4 observations at >= 4 distinct epsilon values, got " +
                              std::to_string(levels.size()) + " distinct");

    // Multi-start: coarse grid over (beta, sigma) plus seeded jitter, best few
    // refined by coordinate descent.
    std::vector<Shape> starts;
    for (double beta = -6.0; beta <= 16.0; beta += 2.0)
        for (double sigma : {-3.0, -1.0, -0.1, 0.0, 0.1, 1.0, 2.0, 3.0, 5.0, 8.0}) starts.push_back({beta, sigma});
    std::uint64_t state = options.seed;
    auto uniform = [&state] {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<double>(state >> 11) * 0x1.0p-53;
    };
    for (int i = 0; i < 16; ++i) starts.push_back({-6.0 + 22.0 * uniform(), -3.0 + 11.0 * uniform()});

    std::vector<std::pair<double, Shape>> ranked;
    for (const auto& s : starts) ranked.emplace_back(project(observations, s).sse, s);
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

    Refined best;
    best.lin.sse = std::numeric_limits<double>::infinity();
    const std::size_t refine = std::min<std::size_t>(6, ranked.size());
    for (std::size_t i = 0; i < refine; ++i) {
        const Shape descended = coordinate_descent(observations, ranked[i].second, 400);
        Refined candidate = gauss_newton(observations, descended, options.max_iterations);
        if (candidate.lin.sse < best.lin.sse) best = candidate;
    }

    JoinTimeModel model;
    model.l1 = best.lin.l1;
    model.l2 = best.lin.l2;
    model.a = best.shape.a();
    model.b = best.shape.b();
    model.residual_rms = std::sqrt(best.lin.sse / static_cast<double>(observations.size()));
    model.converged = best.converged;
    return model;
}

OptimalEpsilon solve_optimal_epsilon(const BloomTimeModelEps& bloom, const JoinTimeModel& join,
                                     const SolveOptions& options) {
    for (double v : {bloom.c0, bloom.c1, join.l1, join.l2, join.a, join.b})
        if (!std::isfinite(v)) throw InvalidArgument("optimizer: non-finite model parameter");
    if (bloom.c1 < 0.0) throw InvalidArgument("optimizer: C1 must be >= 0");
    if (!(join.b > 0.0) || !(join.a + join.b > 0.0))
        throw InvalidArgument("optimizer: join model needs B > 0 and A + B > 0");
    if (!(options.eps_min > 0.0 && options.eps_min < 1.0)) throw InvalidArgument("optimizer: eps_min outside (0, 1)");

    auto f = [&](double e) { return total_derivative(e, bloom, join); };
    auto df = [&](double e) { return join.a * join.a / poly(join, e) + bloom.c1 / (e * e); };
    auto scale = [&](double e) {
        return std::abs(join.a * std::log(poly(join, e))) + std::abs(join.a) + std::abs(join.l2) + bloom.c1 / e;
    };

    double lo = options.eps_min;
    double hi = 1.0;
    const double f_lo = f(lo);
    const double f_hi = f(hi);

    OptimalEpsilon out;
    auto boundary = [&](bool warn) {
        const bool pick_lo = model_total(lo, bloom, join) < model_total(hi, bloom, join);
        out.epsilon_star = pick_lo ? lo : hi;
        out.residual = std::abs(pick_lo ? f_lo : f_hi);
        out.method = Method::boundary;
        out.warning = warn;
        return out;
    };

    const double level = std::max({std::abs(model_total(lo, bloom, join)), std::abs(model_total(hi, bloom, join)),
                                   std::numeric_limits<double>::min()});
    if (std::max(std::abs(f_lo), std::abs(f_hi)) * (hi - lo) <= 1e-9 * level) return boundary(true);
    if (!(f_lo < 0.0 && f_hi > 0.0)) return boundary(false);

    double x = 0.5 * (lo + hi);
    bool last_newton = false;
    for (std::size_t it = 1; it <= options.max_iterations; ++it) {
        out.iterations = it;
        const double fx = f(x);
        if (std::abs(fx) <= options.tolerance * scale(x)) {
            out.epsilon_star = x;
            out.residual = std::abs(fx);
            out.method = last_newton ? Method::newton : Method::bisection;
            return out;
        }
        (fx < 0.0 ? lo : hi) = x;
        if (hi - lo <= options.tolerance * x) break;

        const double slope = df(x);
        double next = x - fx / slope;
        last_newton = std::isfinite(next) && slope > 0.0 && next > lo && next < hi;
        if (!last_newton) next = 0.5 * (lo + hi);
        if (last_newton && std::abs(next - x) <= options.tolerance * x) {
            out.epsilon_star = next;
            out.residual = std::abs(f(next));
            out.method = Method::newton;
            return out;
        }
        x = next;
    }

    // Bracket collapsed or iteration cap reached.
    out.epsilon_star = 0.5 * (lo + hi);
    out.residual = std::abs(f(out.epsilon_star));
    out.method = last_newton ? Method::newton : Method::bisection;
    out.warning = out.iterations >= options.max_iterations;
    return out;
}

}  // namespace bloomjoin::costmodel
